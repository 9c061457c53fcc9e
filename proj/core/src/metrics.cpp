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

#include "metareg/metrics.hpp"

#include <cmath>

#include "metareg/error.hpp"
#include "metareg/transforms.hpp"

namespace metareg {

double dice(const Volume& a, const Volume& b) {
  if (a.grid.dims() != b.grid.dims())
    throw ShapeError("dice: grid mismatch " + dims_to_string(a.grid.dims()) + " vs " + dims_to_string(b.grid.dims()));
  if (!is_binary(a.grid) || !is_binary(b.grid)) throw DomainError("dice: masks must be binary");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.grid.size(); ++i) {
    const bool x = a.grid[i] != 0.0f, y = b.grid[i] != 0.0f;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

const Landmark* LandmarkSet::find(const std::string& name) const {
  for (const Landmark& l : landmarks)
    if (l.name == name) return &l;
  return nullptr;
}

void validate(const LandmarkSet& set, const Extent& g, double spacing_mm) {
  const int ext[3] = {g.x, g.y, g.z};
  for (const Landmark& l : set.landmarks) {
    if (!(l.radius_mm > 0.0)) throw DomainError("landmark '" + l.name + "': radius must be positive");
    for (int a = 0; a < 3; ++a) {
      const double c = l.centroid_mm[a];
      if (!(c >= 0.0 && c <= (ext[a] - 1) * spacing_mm))
        throw DomainError("landmark '" + l.name + "' lies outside the image extent");
    }
  }
}

Volume rasterize_sphere(const Landmark& lm, const Extent& g, double spacing_mm) {
  Volume out = Volume::zeros(g, spacing_mm);
  const double r2 = lm.radius_mm * lm.radius_mm;
  std::size_t i = 0;
  for (int z = 0; z < g.z; ++z)
    for (int y = 0; y < g.y; ++y)
      for (int x = 0; x < g.x; ++x, ++i) {
        const double dx = x * spacing_mm - lm.centroid_mm[0];
        const double dy = y * spacing_mm - lm.centroid_mm[1];
        const double dz = z * spacing_mm - lm.centroid_mm[2];
        if (dx * dx + dy * dy + dz * dz <= r2) out.grid[i] = 1.0f;
      }
  return out;
}

bool mask_centroid_mm(const Volume& mask, std::array<double, 3>& out) {
  const Extent g = mask.extent();
  double sx = 0, sy = 0, sz = 0;
  std::size_t n = 0, i = 0;
  for (int z = 0; z < g.z; ++z)
    for (int y = 0; y < g.y; ++y)
      for (int x = 0; x < g.x; ++x, ++i)
        if (mask.grid[i] != 0.0f) {
          sx += x;
          sy += y;
          sz += z;
          ++n;
        }
  if (n == 0) return false;
  const double dn = static_cast<double>(n);
  out = {sx / dn * mask.spacing_mm, sy / dn * mask.spacing_mm, sz / dn * mask.spacing_mm};
  return true;
}

TreResult tre(const LandmarkSet& moving, const LandmarkSet& fixed, const DisplacementField& ddf, double spacing_mm) {
  if (!(spacing_mm > 0.0)) throw DomainError("tre: spacing must be positive");
  const Extent g = ddf.extent();
  TreResult r;
  double sum = 0.0;
  for (const Landmark& m : moving.landmarks) {
    const Landmark* f = fixed.find(m.name);
    if (!f) throw DomainError("tre: fixed landmarks have no '" + m.name + "'");
    const Volume warped = warp_mask(rasterize_sphere(m, g, spacing_mm), ddf);
    std::array<double, 3> c;
    if (!mask_centroid_mm(warped, c)) {
      ++r.excluded;
      r.excluded_names.push_back(m.name);
      continue;
    }
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) d2 += (c[a] - f->centroid_mm[a]) * (c[a] - f->centroid_mm[a]);
    sum += d2;
    ++r.used;
  }
  if (r.used == 0) throw DomainError("tre: no landmark survived warping");
  r.tre_mm = std::sqrt(sum / r.used);
  return r;
}

}  // namespace metareg
