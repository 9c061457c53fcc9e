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

#include <doctest.h>

#include <cmath>

#include "metareg/error.hpp"
#include "metareg/ops.hpp"
#include "metareg/tape.hpp"
#include "oracles.hpp"

using namespace metareg;

TEST_CASE("tensor layout is x-fastest") {
  Tensor t({2, 3, 4, 5});
  CHECK(t.index(0, 1, 0, 0) == 1);
  CHECK(t.index(0, 0, 1, 0) == 3);
  CHECK(t.index(0, 0, 0, 1) == 12);
  CHECK(t.index(1, 0, 0, 0) == 60);
  CHECK(t.extent() == Extent{3, 4, 5});
  CHECK(t.channels() == 2);
  CHECK_THROWS_AS(Tensor({2, 0, 1}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3)), ShapeError);
}

TEST_CASE("tape: identity graph has gradient 1") {
  Tape t;
  Var p = t.parameter(Tensor::scalar(3.0f), 0);
  t.backward(p);
  CHECK(t.grad(p).item() == 1.0f);
}

TEST_CASE("tape: second backward is rejected") {
  Tape t;
  Var p = t.variable(Tensor::scalar(1.0f));
  Var q = scale(t, p, 2.0f);
  t.backward(q);
  CHECK(t.grad(p).item() == 2.0f);
  CHECK_THROWS_AS(t.backward(q), TapeError);
  CHECK_THROWS_AS(t.constant(Tensor::scalar(0.0f)), TapeError);
}

TEST_CASE("tape: backward needs a scalar") {
  Tape t;
  Var v = t.variable(Tensor::volume({2, 2, 2}));
  CHECK_THROWS_AS(t.backward(v), TapeError);
}

TEST_CASE("tape: ssd(x, x) gives a zero gradient") {
  Rng rng(1);
  Tape t;
  Var x = t.variable(oracle::random_tensor<float>({4, 4, 4}, rng));
  Var f = t.constant(t.value(x));
  t.backward(ssd(t, x, f));
  for (float g : t.grad(x).values()) CHECK(g == 0.0f);
}

TEST_CASE("conv3d: 1x1x1 unit kernel is the identity") {
  Rng rng(2);
  const Tensor in = oracle::random_tensor<float>({1, 5, 4, 3}, rng);
  const Tensor k({1, 1, 1, 1, 1}, 1.0f);
  CHECK(conv3d(in, k, 1) == in);
}

TEST_CASE("conv3d: averaging a constant keeps interior voxels") {
  const Tensor in({1, 6, 6, 6}, 0.7f);
  const Tensor k({1, 1, 3, 3, 3}, 1.0f / 27.0f);
  const Tensor out = conv3d(in, k, 1);
  for (int z = 1; z < 5; ++z)
    for (int y = 1; y < 5; ++y)
      for (int x = 1; x < 5; ++x) CHECK(out.at(0, x, y, z) == doctest::Approx(0.7).epsilon(1e-6));
}

TEST_CASE("conv3d matches the nested-loop oracle") {
  Rng rng(3);
  struct Case {
    std::vector<int> in;
    int o, k, stride;
  };
  const Case cases[] = {{{1, 4, 4, 4}, 2, 3, 1}, {{3, 7, 5, 6}, 4, 3, 1}, {{2, 8, 8, 8}, 3, 3, 2},
                        {{2, 9, 6, 5}, 2, 5, 1}, {{5, 6, 6, 6}, 3, 1, 1}, {{4, 7, 9, 6}, 6, 3, 2},
                        {{17, 12, 12, 12}, 9, 3, 1}};
  for (const auto& c : cases) {
    CAPTURE(c.k);
    CAPTURE(c.stride);
    const Tensor in = oracle::random_tensor<float>(c.in, rng);
    const Tensor w = oracle::random_tensor<float>({c.o, c.in[0], c.k, c.k, c.k}, rng);
    const Tensor b = oracle::random_tensor<float>({c.o}, rng);
    const Tensor got = conv3d(in, w, c.stride, &b);
    const Tensor want = oracle::naive_conv3d(in, w, c.stride, &b);
    REQUIRE(got.dims() == want.dims());
    for (std::size_t i = 0; i < got.size(); ++i)
      REQUIRE(got[i] == doctest::Approx(want[i]).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("conv3d rejects a channel mismatch") {
  const Tensor in({2, 4, 4, 4});
  const Tensor w({1, 3, 3, 3, 3});
  CHECK_THROWS_AS(conv3d(in, w, 1), ShapeError);
}

TEST_CASE("trilinear_sample oracles") {
  Rng rng(4);
  const Tensor v = oracle::random_tensor<float>({5, 6, 4}, rng);
  CHECK(trilinear_sample(v, 2.0f, 3.0f, 1.0f) == v.at(2, 3, 1));
  CHECK(trilinear_sample(v, -5.0f, -5.0f, -5.0f) == 0.0f);

  Tensor pair({2, 1, 1});
  pair.at(0, 0, 0) = 0.0f;
  pair.at(1, 0, 0) = 2.0f;
  CHECK(trilinear_sample(pair, 0.5f, 0.0f, 0.0f) == 1.0f);

  const Tensor64 v64 = v.cast<double>();
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(-1.5, 5.5), y = rng.uniform(-1.5, 6.5), z = rng.uniform(-1.5, 4.5);
    CHECK(trilinear_sample(v64, x, y, z) == doctest::Approx(oracle::naive_trilinear(v64, x, y, z)).epsilon(1e-12));
  }
}

TEST_CASE("upsample_trilinear") {
  SUBCASE("constant") {
    const Tensor in({2, 3, 4, 2}, 1.25f);
    const Tensor out = upsample_trilinear(in);
    for (float v : out.values()) CHECK(v == doctest::Approx(1.25f).epsilon(1e-7));
  }
  SUBCASE("linear ramp stays linear") {
    Tensor64 in({4, 3, 3});
    for (int z = 0; z < 3; ++z)
      for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x) in.at(x, y, z) = 2.0 * x + 1.0;
    const Tensor64 out = upsample_trilinear(in);
    REQUIRE(out.extent() == Extent{8, 6, 6});
    for (int x = 0; x < 8; ++x) CHECK(out.at(x, 2, 3) == doctest::Approx(2.0 * (x * 3.0 / 7.0) + 1.0).epsilon(1e-12));
  }
  SUBCASE("per-voxel formula") {
    Rng rng(5);
    const Tensor64 in = oracle::random_tensor({2, 3, 5, 4}, rng);
    const Tensor64 out = upsample_trilinear(in);
    const Extent e = in.extent();
    for (int c = 0; c < 2; ++c)
      for (int z = 0; z < 2 * e.z; ++z)
        for (int y = 0; y < 2 * e.y; ++y)
          for (int x = 0; x < 2 * e.x; ++x) {
            const double cx = x * (e.x - 1.0) / (2 * e.x - 1.0);
            const double cy = y * (e.y - 1.0) / (2 * e.y - 1.0);
            const double cz = z * (e.z - 1.0) / (2 * e.z - 1.0);
            Tensor64 ch({e.x, e.y, e.z});
            std::copy(in.channel(c).begin(), in.channel(c).end(), ch.storage().begin());
            REQUIRE(out.at(c, x, y, z) == doctest::Approx(oracle::naive_trilinear(ch, cx, cy, cz)).epsilon(1e-6));
          }
  }
}

TEST_CASE("float and double kernels agree") {
  Rng rng(6);
  const Tensor in = oracle::random_tensor<float>({3, 8, 8, 8}, rng);
  const Tensor w = oracle::random_tensor<float>({4, 3, 3, 3, 3}, rng);
  const Tensor a = conv3d(in, w, 1);
  const Tensor64 b = conv3d(in.cast<double>(), w.cast<double>(), 1);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-5).scale(1.0));
}
