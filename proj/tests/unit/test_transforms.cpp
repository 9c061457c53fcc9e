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
#include <numbers>

#include "metareg/error.hpp"
#include "metareg/transforms.hpp"
#include "oracles.hpp"

using namespace metareg;

namespace {

Volume random_volume(Extent e, std::uint64_t seed) {
  Rng rng(seed);
  return Volume{oracle::random_tensor<float>({e.x, e.y, e.z}, rng, 0, 1), 0.8};
}

DisplacementField constant_field(Extent e, float dx, float dy, float dz) {
  DisplacementField f = DisplacementField::zeros(e);
  const float d[3] = {dx, dy, dz};
  for (int c = 0; c < 3; ++c)
    for (float& v : f.vectors.channel(c)) v = d[c];
  return f;
}

Volume box_mask(Extent e, int x0, int x1, int y0, int y1, int z0, int z1) {
  Volume m = Volume::zeros(e);
  for (int z = z0; z < z1; ++z)
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) m.grid.at(x, y, z) = 1.0f;
  return m;
}

}  // namespace

TEST_CASE("warp_volume: zero field is the identity") {
  const Volume m = random_volume({6, 5, 7}, 1);
  CHECK(warp_volume(m, DisplacementField::zeros({6, 5, 7})) == m);
}

TEST_CASE("warp_volume: unit shift matches the integer-shift oracle") {
  const Extent e{7, 6, 5};
  const Volume m = random_volume(e, 2);
  const Volume w = warp_volume(m, constant_field(e, 1, 0, 0));
  for (int z = 0; z < e.z; ++z)
    for (int y = 0; y < e.y; ++y)
      for (int x = 0; x + 1 < e.x; ++x) CHECK(w.grid.at(x, y, z) == m.grid.at(x + 1, y, z));
}

TEST_CASE("warp_volume: sampling outside the grid gives zeros") {
  const Extent e{5, 5, 5};
  const Volume w = warp_volume(random_volume(e, 3), constant_field(e, 50, -50, 50));
  for (float v : w.grid.values()) CHECK(v == 0.0f);
}

TEST_CASE("warp_volume rejects a grid mismatch") {
  CHECK_THROWS_AS(warp_volume(random_volume({4, 4, 4}, 4), DisplacementField::zeros({4, 4, 5})), ShapeError);
}

TEST_CASE("warp_mask") {
  const Extent e{10, 10, 10};
  const Volume mask = box_mask(e, 2, 6, 3, 7, 1, 5);
  CHECK(warp_mask(mask, DisplacementField::zeros(e)) == mask);

  const Volume shifted = warp_mask(mask, constant_field(e, 0, 0, -2));
  for (int z = 2; z < e.z; ++z)
    for (int y = 0; y < e.y; ++y)
      for (int x = 0; x < e.x; ++x) CHECK(shifted.grid.at(x, y, z) == mask.grid.at(x, y, z - 2));

  const Volume ones{Tensor::volume(e, 1.0f), 0.8};
  DisplacementField smooth = DisplacementField::zeros(e);
  for (int z = 0; z < e.z; ++z)
    for (int y = 0; y < e.y; ++y)
      for (int x = 0; x < e.x; ++x) smooth.vectors.at(0, x, y, z) = 0.3f * std::sin(0.5f * y);
  const Volume w = warp_mask(ones, smooth);
  for (int z = 1; z < e.z - 1; ++z)
    for (int y = 1; y < e.y - 1; ++y)
      for (int x = 1; x < e.x - 1; ++x) CHECK(w.grid.at(x, y, z) == 1.0f);

  Volume bad = mask;
  bad.grid.at(0, 0, 0) = 0.5f;
  CHECK_THROWS_AS(warp_mask(bad, DisplacementField::zeros(e)), DomainError);
}

TEST_CASE("sample_affine") {
  SUBCASE("zero ranges give the identity") {
    Rng rng(5);
    CHECK(sample_affine(rng, AffineRanges::none()).is_identity());
  }
  SUBCASE("fixed seed is reproducible") {
    Rng a(6), b(6);
    for (int i = 0; i < 5; ++i) CHECK(sample_affine(a, AffineRanges{}) == sample_affine(b, AffineRanges{}));
  }
  SUBCASE("10000 draws stay in range with a positive determinant") {
    Rng rng(7);
    const AffineRanges r;
    for (int i = 0; i < 10000; ++i) {
      const AffineParams p = sample_affine(rng, r);
      for (int a = 0; a < 3; ++a) {
        REQUIRE(std::abs(p.rotation[a]) <= r.rotation);
        REQUIRE(p.scale[a] >= r.scale_min);
        REQUIRE(p.scale[a] <= r.scale_max);
        REQUIRE(std::abs(p.translation[a]) <= r.translation);
        REQUIRE(std::abs(p.shear[a]) <= r.shear);
      }
      const auto m = affine_linear(p);
      const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                         m[2] * (m[3] * m[7] - m[4] * m[6]);
      REQUIRE(det > 0.0);
    }
  }
  SUBCASE("invalid ranges are rejected") {
    Rng rng(8);
    AffineRanges r;
    r.scale_min = 1.2;
    CHECK_THROWS_AS(sample_affine(rng, r), DomainError);
  }
}

TEST_CASE("apply_affine") {
  const Extent e{8, 7, 6};
  const Volume v = random_volume(e, 9);
  CHECK(apply_affine(v, AffineParams{}) == v);

  SUBCASE("translation by one voxel") {
    AffineParams p;
    p.translation = {1, 0, 0};
    const Volume w = apply_affine(v, p);
    for (int z = 0; z < e.z; ++z)
      for (int y = 0; y < e.y; ++y)
        for (int x = 1; x < e.x; ++x) CHECK(w.grid.at(x, y, z) == doctest::Approx(v.grid.at(x - 1, y, z)).epsilon(1e-6));
  }
  SUBCASE("half turn about z twice") {
    AffineParams p;
    p.rotation = {0, 0, std::numbers::pi};
    const Volume once = apply_affine(v, p);
    CHECK(once.grid.at(0, 0, 2) == doctest::Approx(v.grid.at(e.x - 1, e.y - 1, 2)).epsilon(1e-5));
    const Volume twice = apply_affine(once, p);
    for (int z = 1; z < e.z - 1; ++z)
      for (int y = 1; y < e.y - 1; ++y)
        for (int x = 1; x < e.x - 1; ++x) CHECK(std::abs(twice.grid.at(x, y, z) - v.grid.at(x, y, z)) <= 1e-5);
  }
}
