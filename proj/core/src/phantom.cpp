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

#include "metareg/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "metareg/error.hpp"
#include "metareg/ops.hpp"
#include "metareg/rng.hpp"
#include "metareg/transforms.hpp"

namespace metareg {

namespace {

struct Ellipsoid {
  double center[3];
  double axes[3];
  double rot[9];  // columns are the principal directions
};

std::array<double, 9> rotation_xyz(double ax, double ay, double az) {
  AffineParams p;
  p.rotation = {ax, ay, az};
  return affine_linear(p);
}

// Values on a corner-aligned coarse grid of `g` points per axis, upsampled
// trilinearly onto `e`.
Tensor upsample_control(const Tensor& coarse, const Extent& e) {
  const Extent g = coarse.extent();
  const int channels = coarse.channels();
  Tensor out = Tensor::channels(channels, e);
  auto coord = [](int i, int n, int m) { return m == 1 ? 0.0f : static_cast<float>(i) * static_cast<float>(n - 1) / static_cast<float>(m - 1); };
  for (int c = 0; c < channels; ++c) {
    const Tensor src({g.x, g.y, g.z}, std::vector<float>(coarse.channel(c).begin(), coarse.channel(c).end()));
    std::size_t i = static_cast<std::size_t>(c) * e.voxels();
    for (int z = 0; z < e.z; ++z)
      for (int y = 0; y < e.y; ++y)
        for (int x = 0; x < e.x; ++x, ++i)
          out[i] = trilinear_sample(src, coord(x, g.x, e.x), coord(y, g.y, e.y), coord(z, g.z, e.z));
  }
  return out;
}

Tensor smooth_noise(Rng& rng, const Extent& e, int coarse) {
  Tensor g = Tensor::volume({coarse, coarse, coarse});
  for (float& v : g.storage()) v = static_cast<float>(rng.uniform());
  return upsample_control(g, e);
}

Ellipsoid draw_gland(Rng& rng, const Extent& e) {
  const int ext[3] = {e.x, e.y, e.z};
  for (int attempt = 0; attempt < 64; ++attempt) {
    Ellipsoid el;
    for (int a = 0; a < 3; ++a) {
      el.center[a] = (ext[a] - 1) / 2.0 + rng.uniform(-2.0, 2.0);
      el.axes[a] = rng.uniform(0.18, 0.30) * ext[a];
    }
    const auto r = rotation_xyz(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4));
    std::copy(r.begin(), r.end(), el.rot);
    if (*std::min_element(el.axes, el.axes + 3) >= 3.0) return el;
  }
  throw DomainError("phantom: extent too small for a gland with semi-axes >= 3 voxels");
}

// Normalized ellipsoidal radius of voxel p (1 on the surface).
double gland_radius(const Ellipsoid& el, double x, double y, double z) {
  const double d[3] = {x - el.center[0], y - el.center[1], z - el.center[2]};
  double s = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double q = el.rot[a] * d[0] + el.rot[3 + a] * d[1] + el.rot[6 + a] * d[2];
    s += (q / el.axes[a]) * (q / el.axes[a]);
  }
  return std::sqrt(s);
}

std::array<double, 3> snap(const double p[3]) { return {std::round(p[0]), std::round(p[1]), std::round(p[2])}; }

// Solves q + u(q) = m for q by fixed-point iteration (u is small and smooth).
std::array<double, 3> pull_back(const Tensor& ddf, const std::array<double, 3>& m) {
  const Extent e = ddf.extent();
  std::array<Tensor, 3> comp;
  for (int c = 0; c < 3; ++c) comp[c] = Tensor({e.x, e.y, e.z}, std::vector<float>(ddf.channel(c).begin(), ddf.channel(c).end()));
  std::array<double, 3> q = m;
  for (int it = 0; it < 50; ++it) {
    std::array<double, 3> next;
    for (int c = 0; c < 3; ++c)
      next[c] = m[c] - trilinear_sample(comp[c], static_cast<float>(q[0]), static_cast<float>(q[1]), static_cast<float>(q[2]));
    q = next;
  }
  return q;
}

}  // namespace

CasePair gen_phantom_pair(std::uint64_t seed, const Extent& e, double magnitude, const PhantomOptions& opt) {
  if (e.x % 4 || e.y % 4 || e.z % 4) throw ShapeError("phantom extent must be divisible by 4, got " + to_string(e));
  if (e.x < 16 || e.y < 16 || e.z < 16) throw ShapeError("phantom extent must be at least 16, got " + to_string(e));
  if (!(magnitude >= 0.0) || !std::isfinite(magnitude)) throw DomainError("deform magnitude must be finite and >= 0");
  if (!(opt.spacing_mm > 0.0) || !(opt.landmark_radius_mm > 0.0)) throw DomainError("phantom spacing and landmark radius must be positive");

  Rng rng(seed);
  const Ellipsoid el = draw_gland(rng, e);
  const Tensor tex_bg = smooth_noise(rng, e, 6);
  const Tensor tex_gland = smooth_noise(rng, e, 8);

  // Landmarks in voxel coordinates: center and both poles of the longest axis.
  const int long_axis = static_cast<int>(std::max_element(el.axes, el.axes + 3) - el.axes);
  const double reach = 0.7 * el.axes[long_axis];
  double pa[3], pb[3];
  for (int a = 0; a < 3; ++a) {
    const double dir = el.rot[a * 3 + long_axis];
    pa[a] = el.center[a] + reach * dir;
    pb[a] = el.center[a] - reach * dir;
  }
  const std::array<std::array<double, 3>, 3> lm_vox = {snap(el.center), snap(pa), snap(pb)};
  const char* lm_names[3] = {"center", "pole_a", "pole_b"};

  PhantomCase moving;
  moving.seed = seed;
  moving.deform_magnitude = magnitude;
  moving.image = Volume::zeros(e, opt.spacing_mm);
  moving.gland_mask = Volume::zeros(e, opt.spacing_mm);
  const double edge = *std::min_element(el.axes, el.axes + 3);
  std::size_t i = 0;
  for (int z = 0; z < e.z; ++z)
    for (int y = 0; y < e.y; ++y)
      for (int x = 0; x < e.x; ++x, ++i) {
        const double r = gland_radius(el, x, y, z);
        const double inside = std::clamp((1.0 - r) * edge + 0.5, 0.0, 1.0);  // one-voxel ramp
        double v = (1.0 - inside) * (0.15 + 0.25 * tex_bg[i]) + inside * (0.55 + 0.3 * tex_gland[i]);
        for (const auto& l : lm_vox) {
          const double d2 = (x - l[0]) * (x - l[0]) + (y - l[1]) * (y - l[1]) + (z - l[2]) * (z - l[2]);
          v += 0.35 * std::exp(-d2 / (2.0 * 1.2 * 1.2));
        }
        moving.image.grid[i] = static_cast<float>(v);
        moving.gland_mask.grid[i] = r <= 1.0 ? 1.0f : 0.0f;
      }
  const auto [lo, hi] = std::minmax_element(moving.image.grid.storage().begin(), moving.image.grid.storage().end());
  const float vmin = *lo, span = *hi - *lo;
  for (float& v : moving.image.grid.storage()) v = (v - vmin) / span;
  for (int l = 0; l < 3; ++l)
    moving.landmarks.landmarks.push_back(
        {lm_names[l], {lm_vox[l][0] * opt.spacing_mm, lm_vox[l][1] * opt.spacing_mm, lm_vox[l][2] * opt.spacing_mm}, opt.landmark_radius_mm});

  // Ground-truth field: coarse random control grid plus a linear term.
  Tensor control = Tensor::channels(3, {4, 4, 4});
  for (float& v : control.storage()) v = static_cast<float>(rng.uniform(-magnitude, magnitude));
  Tensor u = upsample_control(control, e);
  double lin[9];
  for (double& v : lin) v = rng.uniform(-1.0, 1.0) * opt.affine_fraction * magnitude;
  const double c[3] = {(e.x - 1) / 2.0, (e.y - 1) / 2.0, (e.z - 1) / 2.0};
  for (int ch = 0; ch < 3; ++ch) {
    std::size_t j = static_cast<std::size_t>(ch) * e.voxels();
    for (int z = 0; z < e.z; ++z)
      for (int y = 0; y < e.y; ++y)
        for (int x = 0; x < e.x; ++x, ++j)
          u[j] += static_cast<float>(lin[ch * 3] * (x - c[0]) + lin[ch * 3 + 1] * (y - c[1]) + lin[ch * 3 + 2] * (z - c[2]));
  }

  CasePair pair;
  pair.ground_truth_ddf = DisplacementField{std::move(u)};
  pair.fixed.seed = seed;
  pair.fixed.deform_magnitude = magnitude;
  pair.fixed.image = warp_volume(moving.image, pair.ground_truth_ddf);
  pair.fixed.gland_mask = warp_mask(moving.gland_mask, pair.ground_truth_ddf);
  for (int l = 0; l < 3; ++l) {
    const auto q = pull_back(pair.ground_truth_ddf.vectors, lm_vox[l]);
    pair.fixed.landmarks.landmarks.push_back(
        {lm_names[l], {q[0] * opt.spacing_mm, q[1] * opt.spacing_mm, q[2] * opt.spacing_mm}, opt.landmark_radius_mm});
  }
  pair.moving = std::move(moving);
  return pair;
}

Split split_dataset(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("train fraction must lie in (0,1)");
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n) throw DomainError("split leaves an empty train or test set");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.index(i + 1)]);
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

}  // namespace metareg
