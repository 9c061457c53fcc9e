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

#include "metareg/transforms.hpp"

#include <cmath>

#include "metareg/error.hpp"
#include "metareg/ops.hpp"

namespace metareg {

namespace {

void require_field_on(const DisplacementField& ddf, const Extent& e, const char* what) {
  const Tensor& v = ddf.vectors;
  if (v.rank() != 4 || v.dim(0) != 3) throw ShapeError(std::string(what) + ": field must be [3,X,Y,Z], got " + dims_to_string(v.dims()));
  if (v.extent() != e)
    throw ShapeError(std::string(what) + ": field grid " + to_string(v.extent()) + " does not match image grid " + to_string(e));
}

using Mat3 = std::array<double, 9>;

Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
  return r;
}

Mat3 inverse(const Mat3& m) {
  const double c00 = m[4] * m[8] - m[5] * m[7];
  const double c01 = m[5] * m[6] - m[3] * m[8];
  const double c02 = m[3] * m[7] - m[4] * m[6];
  const double det = m[0] * c00 + m[1] * c01 + m[2] * c02;
  if (!(std::abs(det) > 0.0)) throw DomainError("affine linear part is singular");
  const double inv = 1.0 / det;
  return {c00 * inv,
          (m[2] * m[7] - m[1] * m[8]) * inv,
          (m[1] * m[5] - m[2] * m[4]) * inv,
          c01 * inv,
          (m[0] * m[8] - m[2] * m[6]) * inv,
          (m[2] * m[3] - m[0] * m[5]) * inv,
          c02 * inv,
          (m[1] * m[6] - m[0] * m[7]) * inv,
          (m[0] * m[4] - m[1] * m[3]) * inv};
}

}  // namespace

bool is_binary(const Tensor& t) {
  for (float v : t.values())
    if (v != 0.0f && v != 1.0f) return false;
  return true;
}

Volume warp_volume(const Volume& moving, const DisplacementField& ddf) {
  require_field_on(ddf, moving.extent(), "warp_volume");
  return Volume{warp(moving.grid, ddf.vectors), moving.spacing_mm};
}

Volume warp_mask(const Volume& mask, const DisplacementField& ddf, double threshold) {
  if (!is_binary(mask.grid)) throw DomainError("warp_mask: mask values must be 0 or 1");
  Volume out = warp_volume(mask, ddf);
  for (float& v : out.grid.storage()) v = static_cast<double>(v) >= threshold ? 1.0f : 0.0f;
  return out;
}

bool AffineParams::is_identity() const { return *this == AffineParams{}; }

void validate(const AffineRanges& r) {
  auto ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (!ok(r.rotation) || !ok(r.translation) || !ok(r.shear)) throw DomainError("affine ranges must be finite and >= 0");
  if (!(r.scale_min > 0.0 && r.scale_min <= r.scale_max && std::isfinite(r.scale_max)))
    throw DomainError("affine scale range must satisfy 0 < scale_min <= scale_max");
}

AffineParams sample_affine(Rng& rng, const AffineRanges& r) {
  validate(r);
  // Every component draws once, so a zero range does not shift the stream.
  auto draw = [&](double lo, double hi) {
    const double u = rng.uniform();
    return lo == hi ? lo : lo + (hi - lo) * u;
  };
  AffineParams p;
  for (double& v : p.rotation) v = draw(-r.rotation, r.rotation);
  for (double& v : p.scale) v = draw(r.scale_min, r.scale_max);
  for (double& v : p.translation) v = draw(-r.translation, r.translation);
  for (double& v : p.shear) v = draw(-r.shear, r.shear);
  return p;
}

std::array<double, 9> affine_linear(const AffineParams& p) {
  const double cx = std::cos(p.rotation[0]), sx = std::sin(p.rotation[0]);
  const double cy = std::cos(p.rotation[1]), sy = std::sin(p.rotation[1]);
  const double cz = std::cos(p.rotation[2]), sz = std::sin(p.rotation[2]);
  const Mat3 rx{1, 0, 0, 0, cx, -sx, 0, sx, cx};
  const Mat3 ry{cy, 0, sy, 0, 1, 0, -sy, 0, cy};
  const Mat3 rz{cz, -sz, 0, sz, cz, 0, 0, 0, 1};
  const Mat3 sh{1, p.shear[0], p.shear[1], 0, 1, p.shear[2], 0, 0, 1};
  const Mat3 sc{p.scale[0], 0, 0, 0, p.scale[1], 0, 0, 0, p.scale[2]};
  return mul(mul(mul(rz, ry), mul(rx, sh)), sc);
}

Volume apply_affine(const Volume& volume, const AffineParams& params) {
  for (double s : params.scale)
    if (!(s > 0.0)) throw DomainError("affine scale factors must be positive");
  if (params.is_identity()) return volume;
  const Mat3 inv = inverse(affine_linear(params));
  const Extent e = volume.extent();
  const double c[3] = {(e.x - 1) / 2.0, (e.y - 1) / 2.0, (e.z - 1) / 2.0};
  Volume out = Volume::zeros(e, volume.spacing_mm);
  std::size_t i = 0;
  for (int z = 0; z < e.z; ++z)
    for (int y = 0; y < e.y; ++y)
      for (int x = 0; x < e.x; ++x, ++i) {
        const double d[3] = {x - c[0] - params.translation[0], y - c[1] - params.translation[1],
                             z - c[2] - params.translation[2]};
        double s[3];
        for (int r = 0; r < 3; ++r) s[r] = inv[r * 3] * d[0] + inv[r * 3 + 1] * d[1] + inv[r * 3 + 2] * d[2] + c[r];
        out.grid[i] = trilinear_sample(volume.grid, static_cast<float>(s[0]), static_cast<float>(s[1]), static_cast<float>(s[2]));
      }
  return out;
}

}  // namespace metareg
