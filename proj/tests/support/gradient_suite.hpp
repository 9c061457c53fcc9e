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

// Finite-difference checks for every differentiable operation, each on
// three shapes/seeds. Shared by the unit tests and the acceptance runner.
#pragma once

#include <string>
#include <vector>

#include "metareg/models.hpp"
#include "metareg/param_vector.hpp"
#include "oracles.hpp"

namespace oracle {

struct GradCheck {
  std::string op;
  int shape = 0;
  FdReport report;
};

namespace detail {

inline Tensor64 away_from_zero(Tensor64 t, double margin = 0.02) {
  for (auto& v : t.storage())
    if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
  return t;
}

}  // namespace detail

inline std::vector<GradCheck> run_gradient_suite() {
  using namespace metareg;
  std::vector<GradCheck> out;
  auto record = [&](const std::string& op, int shape, FdReport r) { out.push_back({op, shape, r}); };
  const std::vector<int> extents[3] = {{4, 5, 3}, {6, 4, 5}, {5, 5, 6}};

  for (int s = 0; s < 3; ++s) {
    Rng rng(1000 + s);
    const auto& e = extents[s];
    const int C = 2 + s, O = 3 - (s % 2);

    for (int stride : {1, 2}) {
      const int k = (s == 2 && stride == 1) ? 1 : 3;
      std::vector<Tensor64> in{random_tensor({C, e[0], e[1], e[2]}, rng), random_tensor({O, C, k, k, k}, rng),
                               random_tensor({O}, rng)};
      record(stride == 1 ? "conv3d" : "conv3d_stride2", s,
          fd_check([&](Tape64& t, std::span<const Var> v) { return reduce(t, conv3d(t, v[0], v[1], v[2], stride), 7); }, in,
                   {true, true, true}, rng));
    }
    {
      std::vector<Tensor64> in{detail::away_from_zero(random_tensor({C, e[0], e[1], e[2]}, rng))};
      record("leaky_relu", s,
          fd_check([](Tape64& t, std::span<const Var> v) { return reduce(t, leaky_relu(t, v[0], 0.2), 8); }, in, {true},
                   rng));
    }
    {
      std::vector<Tensor64> in{random_tensor({C, e[0], e[1], e[2]}, rng)};
      record("upsample2", s,
          fd_check([](Tape64& t, std::span<const Var> v) { return reduce(t, upsample2(t, v[0]), 9); }, in, {true}, rng));
    }
    {
      std::vector<Tensor64> in{random_tensor({C, e[0], e[1], e[2]}, rng), random_tensor({O, e[0], e[1], e[2]}, rng)};
      record("concat_channels", s,
          fd_check([](Tape64& t, std::span<const Var> v) { return reduce(t, concat_channels(t, v[0], v[1]), 10); }, in,
                   {true, true}, rng));
    }
    {
      std::vector<Tensor64> in{random_tensor({e[0], e[1], e[2]}, rng)};
      record("reshape", s,
          fd_check(
              [&](Tape64& t, std::span<const Var> v) { return reduce(t, reshape(t, v[0], {1, e[0], e[1], e[2]}), 11); },
              in, {true}, rng));
    }
    {
      std::vector<Tensor64> in{random_tensor({C, e[0], e[1], e[2]}, rng), random_tensor({C, e[0], e[1], e[2]}, rng),
                               random_tensor({C, e[0], e[1], e[2]}, rng)};
      record("add_scale_mean", s, fd_check(
                                   [](Tape64& t, std::span<const Var> v) {
                                     const Var a = add(t, v[0], scale(t, v[1], -1.7));
                                     const Var parts[] = {a, v[2], v[0]};
                                     return reduce(t, mean(t, std::span<const Var>(parts)), 12);
                                   },
                                   in, {true, true, true}, rng));
    }
    {
      // Points spread a little beyond the grid so the zero padding is hit.
      Tensor64 pts({3, 3, 4, 2});
      for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < pts.extent().voxels(); ++i) pts.channel(c)[i] = rng.uniform(-0.8, e[c] - 0.2);
      keep_off_grid(pts);
      std::vector<Tensor64> in{random_tensor({e[0], e[1], e[2]}, rng), pts};
      record("sample", s,
          fd_check([](Tape64& t, std::span<const Var> v) { return reduce(t, sample(t, v[0], v[1]), 13); }, in,
                   {true, true}, rng));
    }
    {
      Tensor64 ddf = random_tensor({3, e[0], e[1], e[2]}, rng, -1.6, 1.6);
      keep_off_grid(ddf);
      std::vector<Tensor64> in{random_tensor({e[0], e[1], e[2]}, rng), ddf};
      record("warp", s,
          fd_check([](Tape64& t, std::span<const Var> v) { return reduce(t, warp(t, v[0], v[1]), 14); }, in,
                   {true, true}, rng));
    }
    {
      std::vector<Tensor64> in{random_tensor({e[0], e[1], e[2]}, rng), random_tensor({e[0], e[1], e[2]}, rng)};
      record("ssd", s,
          fd_check([](Tape64& t, std::span<const Var> v) { return ssd(t, v[0], v[1]); }, in, {true, true}, rng));
    }
    {
      std::vector<Tensor64> in{random_tensor({3, e[0], e[1], e[2]}, rng)};
      record("bending_energy", s,
          fd_check([](Tape64& t, std::span<const Var> v) { return bending_energy(t, v[0]); }, in, {true}, rng));
    }
    {
      Tensor64 ddf = random_tensor({3, e[0], e[1], e[2]}, rng, -1.6, 1.6);
      keep_off_grid(ddf);
      std::vector<Tensor64> in{random_tensor({e[0], e[1], e[2]}, rng, 0, 1), random_tensor({e[0], e[1], e[2]}, rng, 0, 1),
                               ddf};
      const LossWeights w{10.0};
      record("total_loss", s,
          fd_check([&](Tape64& t, std::span<const Var> v) { return total_loss(t, v[0], v[1], v[2], w); }, in,
                   {true, true, true}, rng));
    }
    {
      // Whole network with a random (nonzero) head so every layer gets a
      // gradient. The head is kept small around a non-integer offset so the
      // sampled positions stay inside one trilinear cell under +-h.
      // Inputs: the parameter segments, then moving and fixed.
      const RegNetConfig cfg{2 + s % 2, 2, 3, 3, 2, 2, 0.2};
      const std::vector<int> grids[3] = {{8, 8, 8}, {4, 8, 8}, {8, 4, 4}};
      const auto& n = grids[s];
      const auto layout = regnet_layout(cfg);
      std::vector<Tensor64> in;
      std::vector<bool> diff;
      for (const Segment& seg : layout->segments()) {
        const bool head = seg.name.rfind("head", 0) == 0;
        if (seg.name == "head.bias")
          in.push_back(random_tensor(seg.dims, rng, 0.3, 0.4));
        else
          in.push_back(random_tensor(seg.dims, rng, head ? -0.02 : -0.5, head ? 0.02 : 0.5));
        diff.push_back(true);
      }
      in.push_back(random_tensor(n, rng, 0, 1));
      in.push_back(random_tensor(n, rng, 0, 1));
      diff.push_back(false);
      diff.push_back(false);
      const std::size_t np = layout->segments().size();
      record("regnet", s, fd_check(
                           [&](Tape64& t, std::span<const Var> v) {
                             const Var ddf = regnet_forward(t, cfg, v.first(np), v[np], v[np + 1]);
                             return total_loss(t, v[np], v[np + 1], ddf, LossWeights{10.0});
                           },
                           in, diff, rng, 24));
    }
  }
  return out;
}

}  // namespace oracle
