// Copyright 2026 The metareg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "metareg/tensor.hpp"

namespace metareg {

/// Scalar image on an isotropic grid. Intensities are normalized to [0,1].
struct Volume {
  Tensor grid;  // [X,Y,Z]
  double spacing_mm = 0.8;

  static Volume zeros(Extent e, double spacing_mm = 0.8) { return Volume{Tensor::volume(e), spacing_mm}; }
  Extent extent() const { return grid.extent(); }
  bool operator==(const Volume&) const = default;
};

/// Per-voxel displacement (dx,dy,dz) in voxel units of the fixed grid.
struct DisplacementField {
  Tensor vectors;  // [3,X,Y,Z]

  static DisplacementField zeros(Extent e) { return DisplacementField{Tensor::channels(3, e)}; }
  Extent extent() const { return vectors.extent(); }
  bool operator==(const DisplacementField&) const = default;
};

}  // namespace metareg
