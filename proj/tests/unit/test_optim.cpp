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
#include "metareg/optim.hpp"
#include "metareg/rng.hpp"

using namespace metareg;

namespace {

std::shared_ptr<const Layout> flat_layout(int n) {
  auto l = std::make_shared<Layout>();
  l->add("w", {n});
  return l;
}

ParamVector filled(int n, float v) { return ParamVector(flat_layout(n), v); }

// Scalar Adam written straight from the update rule.
struct ScalarAdam {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0, v = 0;
  int t = 0;
  double step(double p, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    return p - lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace

TEST_CASE("sgd_step") {
  const ParamVector p = filled(4, 1.0f);
  CHECK(sgd_step(p, filled(4, 0.5f), 0.0) == p);
  const ParamVector q = sgd_step(p, filled(4, 0.5f), 0.01);
  for (float v : q.values()) CHECK(v == doctest::Approx(0.995).epsilon(1e-7));

  Rng rng(1);
  const auto l = flat_layout(50);
  ParamVector a(l), g(l);
  for (std::size_t i = 0; i < 50; ++i) {
    a[i] = float(rng.uniform(-1, 1));
    g[i] = float(rng.uniform(-1, 1));
  }
  const ParamVector r = sgd_step(a, g, 0.3);
  for (std::size_t i = 0; i < 50; ++i) CHECK(r[i] == static_cast<float>(a[i] - 0.3 * g[i]));
  CHECK_THROWS_AS(sgd_step(a, filled(49, 0.0f), 0.1), ShapeError);
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    const ParamVector p = filled(3, 0.25f);
    AdamState s = AdamState::fresh(AdamConfig{0.1}, p);
    CHECK(adam_step(s, p, filled(3, 0.0f)) == p);
    CHECK(s.t == 1);
  }
  SUBCASE("first step has magnitude lr") {
    const ParamVector p = filled(1, 2.0f);
    AdamState s = AdamState::fresh(AdamConfig{1e-3}, p);
    const double g = 0.37;
    const ParamVector q = adam_step(s, p, filled(1, float(g)));
    const double want = 2.0 - 1e-3 * double(float(g)) / (double(float(g)) + 1e-8);
    CHECK(q[0] == doctest::Approx(want).epsilon(1e-7));
  }
  SUBCASE("10 steps on a quadratic match the scalar reference") {
    const double lr = 0.05, c = 1.5;
    ParamVector p = filled(1, 3.0f);
    AdamState s = AdamState::fresh(AdamConfig{lr}, p);
    ScalarAdam ref{lr};
    double x = 3.0;
    for (int i = 0; i < 10; ++i) {
      const float g = float(2 * c * p[0]);
      p = adam_step(s, p, filled(1, g));
      x = ref.step(x, g);
      CHECK(p[0] == doctest::Approx(x).epsilon(1e-7));
      x = p[0];  // follow the float trajectory
    }
  }
  SUBCASE("convex quadratic loss decreases within 100 steps") {
    for (double lr : {1e-3, 1e-2, 1e-1}) {
      ParamVector p = filled(1, 0.8f);
      AdamState s = AdamState::fresh(AdamConfig{lr}, p);
      for (int i = 0; i < 100; ++i) p = adam_step(s, p, filled(1, 2 * p[0]));
      CHECK(p[0] * p[0] < 0.64f);
    }
  }
  SUBCASE("layout mismatch") {
    const ParamVector p = filled(3, 0.0f);
    AdamState s = AdamState::fresh(AdamConfig{}, p);
    CHECK_THROWS_AS(adam_step(s, p, filled(2, 0.0f)), ShapeError);
  }
}

TEST_CASE("linear_decay") {
  const LinearDecay d{0.5, 1e-5, 20000};
  CHECK(linear_decay(d, 0) == 0.5);
  CHECK(linear_decay(d, 20000) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(linear_decay(d, 10000) == doctest::Approx((0.5 + 1e-5) / 2).epsilon(1e-12));
  CHECK(linear_decay(d, 50000) == linear_decay(d, 20000));
  CHECK(linear_decay(d, -4) == 0.5);
  CHECK_THROWS_AS(validate(LinearDecay{0.5, 1e-5, 0}), DomainError);
}
