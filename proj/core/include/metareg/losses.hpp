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

#include "metareg/tape.hpp"
#include "metareg/tensor.hpp"

namespace metareg {

/// Deformation weight of the regularizer in total_loss.
struct LossWeights {
  double alpha = 10.0;

  bool operator==(const LossWeights&) const = default;
};

void validate(const LossWeights& w);

/// Mean over voxels of the squared intensity difference.
template <typename T>
T ssd(const BasicTensor<T>& warped, const BasicTensor<T>& fixed);

/// Bending energy of a [3,X,Y,Z] displacement field: mean over interior
/// voxels and the three components of
///   uxx^2 + uyy^2 + uzz^2 + 2 uxy^2 + 2 uxz^2 + 2 uyz^2
/// with second derivatives from central differences in voxel units.
/// Requires extent >= 3 on every axis.
template <typename T>
T bending_energy(const BasicTensor<T>& ddf);

/// ssd(warp(moving, ddf), fixed) + alpha * bending_energy(ddf).
template <typename T>
T total_loss(const BasicTensor<T>& moving, const BasicTensor<T>& fixed, const BasicTensor<T>& ddf,
             const LossWeights& w);

template <typename T>
Var ssd(BasicTape<T>& tape, Var warped, Var fixed);

template <typename T>
Var bending_energy(BasicTape<T>& tape, Var ddf);

template <typename T>
Var total_loss(BasicTape<T>& tape, Var moving, Var fixed, Var ddf, const LossWeights& w);

}  // namespace metareg
