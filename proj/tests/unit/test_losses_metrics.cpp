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
#include "metareg/losses.hpp"
#include "metareg/metrics.hpp"
#include "metareg/ops.hpp"
#include "metareg/transforms.hpp"
#include "oracles.hpp"

using namespace metareg;

namespace {

// Mean over interior voxels and components of the second-derivative sum,
// written out term by term.
double naive_bending(const Tensor64& u) {
  const Extent e = u.extent();
  double acc = 0.0;
  std::size_t n = 0;
  for (int c = 0; c < 3; ++c)
    for (int z = 1; z < e.z - 1; ++z)
      for (int y = 1; y < e.y - 1; ++y)
        for (int x = 1; x < e.x - 1; ++x) {
          auto f = [&](int dx, int dy, int dz) { return u.at(c, x + dx, y + dy, z + dz); };
          const double dxx = f(1, 0, 0) - 2 * f(0, 0, 0) + f(-1, 0, 0);
          const double dyy = f(0, 1, 0) - 2 * f(0, 0, 0) + f(0, -1, 0);
          const double dzz = f(0, 0, 1) - 2 * f(0, 0, 0) + f(0, 0, -1);
          const double dxy = (f(1, 1, 0) - f(1, -1, 0) - f(-1, 1, 0) + f(-1, -1, 0)) / 4;
          const double dxz = (f(1, 0, 1) - f(1, 0, -1) - f(-1, 0, 1) + f(-1, 0, -1)) / 4;
          const double dyz = (f(0, 1, 1) - f(0, 1, -1) - f(0, -1, 1) + f(0, -1, -1)) / 4;
          acc += dxx * dxx + dyy * dyy + dzz * dzz + 2 * (dxy * dxy + dxz * dxz + dyz * dyz);
          ++n;
        }
  return acc / static_cast<double>(n);
}

Volume cube(Extent e, int x0, int side) {
  Volume m = Volume::zeros(e);
  for (int z = 2; z < 2 + side; ++z)
    for (int y = 2; y < 2 + side; ++y)
      for (int x = x0; x < x0 + side; ++x) m.grid.at(x, y, z) = 1.0f;
  return m;
}

}  // namespace

TEST_CASE("ssd") {
  Rng rng(1);
  const Tensor a = oracle::random_tensor<float>({5, 4, 6}, rng);
  const Tensor b = oracle::random_tensor<float>({5, 4, 6}, rng);
  CHECK(ssd(a, a) == 0.0f);
  CHECK(ssd(Tensor::volume({3, 3, 3}, 0.0f), Tensor::volume({3, 3, 3}, 1.0f)) == 1.0f);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  CHECK(ssd(a, b) == doctest::Approx(acc / a.size()).epsilon(1e-6));
  CHECK_THROWS_AS(ssd(a, Tensor::volume({5, 4, 5})), ShapeError);
}

TEST_CASE("bending_energy") {
  const Extent e{6, 5, 7};
  CHECK(bending_energy(Tensor::channels(3, e)) == 0.0f);

  SUBCASE("affine field, integer coefficients: exactly zero") {
    Tensor u = Tensor::channels(3, e);
    const int A[3][3] = {{2, -1, 3}, {0, 4, -2}, {1, 1, 1}};
    for (int c = 0; c < 3; ++c)
      for (int z = 0; z < e.z; ++z)
        for (int y = 0; y < e.y; ++y)
          for (int x = 0; x < e.x; ++x) u.at(c, x, y, z) = float(A[c][0] * x + A[c][1] * y + A[c][2] * z + 5 - c);
    CHECK(bending_energy(u) == 0.0f);
  }
  SUBCASE("affine field, random coefficients") {
    Rng rng(2);
    Tensor64 u = Tensor64::channels(3, e);
    double A[3][4];
    for (auto& row : A)
      for (double& v : row) v = rng.uniform(-2, 2);
    for (int c = 0; c < 3; ++c)
      for (int z = 0; z < e.z; ++z)
        for (int y = 0; y < e.y; ++y)
          for (int x = 0; x < e.x; ++x) u.at(c, x, y, z) = A[c][0] * x + A[c][1] * y + A[c][2] * z + A[c][3];
    CHECK(std::abs(bending_energy(u)) <= 1e-6);
  }
  SUBCASE("u_x = x^2 contributes 4 per interior voxel") {
    Tensor64 u = Tensor64::channels(3, e);
    for (int z = 0; z < e.z; ++z)
      for (int y = 0; y < e.y; ++y)
        for (int x = 0; x < e.x; ++x) u.at(0, x, y, z) = double(x) * x;
    // 4 from the x component, 0 from y and z, averaged over three components.
    CHECK(bending_energy(u) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("random field matches the term-by-term oracle") {
    Rng rng(3);
    const Tensor64 u = oracle::random_tensor({3, 5, 6, 4}, rng);
    CHECK(bending_energy(u) == doctest::Approx(naive_bending(u)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(bending_energy(Tensor::channels(3, {2, 5, 5})), ShapeError);
}

TEST_CASE("total_loss") {
  Rng rng(4);
  const Tensor64 m = oracle::random_tensor({6, 6, 6}, rng, 0, 1);
  const Tensor64 f = oracle::random_tensor({6, 6, 6}, rng, 0, 1);
  const Tensor64 u = oracle::random_tensor({3, 6, 6, 6}, rng, -1, 1);
  CHECK(total_loss(m, m, Tensor64::channels(3, {6, 6, 6}), LossWeights{10.0}) == 0.0);
  CHECK(total_loss(m, f, u, LossWeights{0.0}) == ssd(warp(m, u), f));
  const double want = ssd(warp(m, u), f) + 10.0 * naive_bending(u);
  CHECK(total_loss(m, f, u, LossWeights{10.0}) == doctest::Approx(want).epsilon(1e-12));
  CHECK_THROWS_AS(total_loss(m, f, u, LossWeights{-1.0}), DomainError);
}

TEST_CASE("dice") {
  const Extent e{20, 14, 14};
  const Volume a = cube(e, 2, 10);
  CHECK(dice(a, a) == 1.0);
  CHECK(dice(cube(e, 0, 4), cube(e, 10, 4)) == 0.0);
  CHECK(dice(a, cube(e, 7, 10)) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(dice(Volume::zeros(e), Volume::zeros(e)) == 1.0);
  Volume bad = a;
  bad.grid.at(0, 0, 0) = 2.0f;
  CHECK_THROWS_AS(dice(bad, a), DomainError);
  CHECK_THROWS_AS(dice(a, Volume::zeros({20, 14, 13})), ShapeError);
}

TEST_CASE("tre") {
  const Extent e{16, 16, 16};
  const DisplacementField zero = DisplacementField::zeros(e);
  const LandmarkSet a{{{"c", {5, 5, 5}, 2.0}, {"d", {10, 9, 8}, 2.0}}};
  CHECK(tre(a, a, zero, 1.0).tre_mm == 0.0);

  const LandmarkSet m1{{{"c", {5, 5, 5}, 2.0}}};
  const LandmarkSet f1{{{"c", {6, 7, 7}, 2.0}}};
  CHECK(tre(m1, f1, zero, 1.0).tre_mm == doctest::Approx(3.0).epsilon(1e-12));

  const LandmarkSet f2{{{"c", {6, 7, 7}, 2.0}, {"d", {10, 9, 12}, 2.0}}};
  CHECK(tre(a, f2, zero, 1.0).tre_mm == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));

  SUBCASE("landmark pushed off the grid is excluded") {
    DisplacementField f = DisplacementField::zeros(e);
    for (int z = 0; z < e.z; ++z)
      for (int y = 0; y < e.y; ++y)
        for (int x = 8; x < e.x; ++x) f.vectors.at(0, x, y, z) = 40.0f;
    const TreResult r = tre(a, a, f, 1.0);
    CHECK(r.used == 1);
    CHECK(r.excluded == 1);
    CHECK(r.excluded_names == std::vector<std::string>{"d"});
    CHECK(r.tre_mm == 0.0);
  }
  CHECK_THROWS_AS(tre(a, m1, zero, 1.0), DomainError);
}

TEST_CASE("rasterize_sphere and centroid") {
  const Landmark lm{"p", {4.0, 4.8, 3.2}, 2.0};
  const Volume s = rasterize_sphere(lm, {12, 12, 12}, 0.8);
  std::array<double, 3> c;
  REQUIRE(mask_centroid_mm(s, c));
  for (int a = 0; a < 3; ++a) CHECK(c[a] == doctest::Approx(lm.centroid_mm[a]).epsilon(1e-12));
  CHECK_FALSE(mask_centroid_mm(Volume::zeros({4, 4, 4}), c));
  CHECK_THROWS_AS(validate(LandmarkSet{{{"q", {100, 0, 0}, 2.0}}}, {12, 12, 12}, 0.8), DomainError);
}
