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

#include <array>

#include "metareg/image.hpp"
#include "metareg/rng.hpp"

namespace metareg {

/// out(p) = moving(p + u(p)), trilinear with zero padding. Moving image and
/// field must share one grid.
Volume warp_volume(const Volume& moving, const DisplacementField& ddf);

/// Warp of a {0,1} mask followed by binarization at `threshold`.
Volume warp_mask(const Volume& mask, const DisplacementField& ddf, double threshold = 0.5);

bool is_binary(const Tensor& t);

/// Random affine augmentation parameters. The linear part is
/// Rz * Ry * Rx * Shear * Scale with Shear upper unit-triangular
/// (xy, xz, yz), so its determinant is scale.x * scale.y * scale.z.
struct AffineParams {
  std::array<double, 3> rotation{0, 0, 0};  // radians about x, y, z
  std::array<double, 3> scale{1, 1, 1};
  std::array<double, 3> translation{0, 0, 0};  // voxels
  std::array<double, 3> shear{0, 0, 0};        // xy, xz, yz

  bool is_identity() const;
  bool operator==(const AffineParams&) const = default;
};

/// Symmetric sampling ranges: rotation in [-rotation, rotation], scale in
/// [scale_min, scale_max], and so on, independently per component.
struct AffineRanges {
  double rotation = 0.1;
  double scale_min = 0.9;
  double scale_max = 1.1;
  double translation = 2.0;
  double shear = 0.05;

  static AffineRanges none() { return AffineRanges{0.0, 1.0, 1.0, 0.0, 0.0}; }
  bool operator==(const AffineRanges&) const = default;
};

void validate(const AffineRanges& r);

AffineParams sample_affine(Rng& rng, const AffineRanges& ranges);

/// Row-major 3x3 linear part.
std::array<double, 9> affine_linear(const AffineParams& p);

/// Resamples `volume` through the inverse of y = A (x - c) + c + t, where c
/// is the grid center. Identity parameters return an exact copy.
Volume apply_affine(const Volume& volume, const AffineParams& params);

}  // namespace metareg
