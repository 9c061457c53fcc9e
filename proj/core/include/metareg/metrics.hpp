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
#include <string>
#include <vector>

#include "metareg/image.hpp"

namespace metareg {

/// 2|A n B| / (|A| + |B|) of two binary masks; 1.0 when both are empty.
double dice(const Volume& a, const Volume& b);

/// Positions are in mm with voxel (i,j,k) centered at (i,j,k) * spacing.
struct Landmark {
  std::string name;
  std::array<double, 3> centroid_mm{0, 0, 0};
  double radius_mm = 2.0;

  bool operator==(const Landmark&) const = default;
};

struct LandmarkSet {
  std::vector<Landmark> landmarks;

  const Landmark* find(const std::string& name) const;
  bool operator==(const LandmarkSet&) const = default;
};

/// Checks radius > 0 and centroids inside the physical extent of `grid`.
void validate(const LandmarkSet& set, const Extent& grid, double spacing_mm);

/// Binary ball of voxels whose centers lie within the radius.
Volume rasterize_sphere(const Landmark& lm, const Extent& grid, double spacing_mm);

/// Centroid of the nonzero voxels of a mask in mm; false when empty.
bool mask_centroid_mm(const Volume& mask, std::array<double, 3>& out);

struct TreResult {
  double tre_mm = 0.0;  // RMS over the landmarks that survived warping
  int used = 0;
  int excluded = 0;                    // warped mask became empty
  std::vector<std::string> excluded_names;
};

/// Rasterizes every moving landmark, warps it with warp_mask, and compares
/// the warped centroid with the fixed landmark of the same name. Throws if
/// a moving landmark has no fixed partner or if every landmark is excluded.
TreResult tre(const LandmarkSet& moving, const LandmarkSet& fixed, const DisplacementField& ddf, double spacing_mm);

}  // namespace metareg
