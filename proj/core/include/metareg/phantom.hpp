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

#include <cstdint>
#include <vector>

#include "metareg/image.hpp"
#include "metareg/metrics.hpp"

namespace metareg {

struct PhantomCase {
  Volume image;
  Volume gland_mask;
  LandmarkSet landmarks;
  std::uint64_t seed = 0;
  double deform_magnitude = 0.0;

  bool operator==(const PhantomCase&) const = default;
};

/// Moving case, fixed case and the field with fixed = warp(moving, ddf).
struct CasePair {
  PhantomCase moving;
  PhantomCase fixed;
  DisplacementField ground_truth_ddf;

  bool operator==(const CasePair&) const = default;
};

struct PhantomOptions {
  double spacing_mm = 0.8;
  double landmark_radius_mm = 2.0;
  /// Scale of the global affine part relative to deform_magnitude.
  double affine_fraction = 0.01;
};

/// Ellipsoidal gland with smooth texture; landmarks at the (voxel-snapped)
/// gland center and both poles of the longest axis. The fixed case is the
/// moving case warped by a smooth random field: a 4^3 control grid of
/// amplitude `deform_magnitude` voxels, trilinearly upsampled, plus a small
/// linear term. Extent must be divisible by 4 and at least 16.
CasePair gen_phantom_pair(std::uint64_t seed, const Extent& extent, double deform_magnitude,
                          const PhantomOptions& options = {});

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Shuffled case-level split with round(train_fraction * n) training cases.
Split split_dataset(std::size_t n_cases, double train_fraction, std::uint64_t seed);

}  // namespace metareg
