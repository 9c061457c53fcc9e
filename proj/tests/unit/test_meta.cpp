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
#include "metareg/meta.hpp"
#include "metareg/models.hpp"
#include "metareg/phantom.hpp"
#include "hand_adam.hpp"
#include "oracles.hpp"

using namespace metareg;

namespace {

const RegNetConfig kSmall{4, 4, 8, 8, 4, 4, 0.2};
const Extent kGrid{16, 16, 16};

// Untrained net with a small random head so every layer gets a gradient.
RegNet live_net(std::uint64_t seed) {
  Rng rng(seed);
  RegNet net = init_regnet(kSmall, rng);
  const Layout& l = net.params.layout();
  for (const char* head : {"head.weight", "head.bias"})
    for (float& v : net.params.segment(l.find(head))) v = float(rng.uniform(-0.05, 0.05));
  return net;
}

ParamVector random_params(std::shared_ptr<const Layout> l, Rng& rng) {
  ParamVector p(std::move(l));
  for (float& v : p.values()) v = float(rng.uniform(-1, 1));
  return p;
}

void check_close(const ParamVector& got, const ParamVector& want, double rel) {
  REQUIRE(got.size() == want.size());
  CHECK(oracle::max_rel_diff(got, want) <= rel);
}

EpisodeConfig plain_episode(int k, double lr) {
  EpisodeConfig c;
  c.k = k;
  c.inner_batch = 1;
  c.adam = AdamConfig{lr};
  c.augment_enabled = false;
  return c;
}

}  // namespace

TEST_CASE("reptile_update") {
  auto l = std::make_shared<Layout>();
  l->add("a", {40});
  Rng rng(1);
  const ParamVector w = random_params(l, rng), th = random_params(l, rng);
  CHECK(reptile_update(w, th, 0.0) == w);
  CHECK(reptile_update(w, th, 1.0) == th);
  const ParamVector r = reptile_update(w, th, 0.37);
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(r[i] == float(double(w[i]) + 0.37 * (double(th[i]) - w[i])));
    CHECK(r[i] >= std::min(w[i], th[i]));
    CHECK(r[i] <= std::max(w[i], th[i]));
  }
  CHECK(reptile_update(ParamVector(l, 0.0f), ParamVector(l, 1.0f), 0.5)[3] == 0.5f);
  auto l2 = std::make_shared<Layout>();
  l2->add("b", {40});
  CHECK_THROWS_AS(reptile_update(w, ParamVector(l2), 0.5), ShapeError);
}

TEST_CASE("run_episode") {
  const CasePair p = gen_phantom_pair(11, kGrid, 2.0);
  const RegNet net = live_net(2);
  Rng rng(3);

  SUBCASE("k = 0 returns omega") {
    CHECK(run_episode(kSmall, net.params, p.moving.image, p.fixed.image, plain_episode(0, 1e-3), rng).theta ==
          net.params);
  }
  SUBCASE("k = 1, batch 1, no augmentation is one Adam step") {
    const ParamVector before = net.params;
    const EpisodeResult r = run_episode(kSmall, net.params, p.moving.image, p.fixed.image, plain_episode(1, 1e-3), rng);
    CHECK(net.params == before);
    check_close(r.theta, oracle::hand_adam_step(net, p.moving.image, p.fixed.image, 1e-3), 1e-6);
  }
  SUBCASE("fixed seed is reproducible with augmentation on") {
    EpisodeConfig c = plain_episode(2, 1e-3);
    c.inner_batch = 2;
    c.augment_enabled = true;
    Rng a(9), b(9);
    CHECK(run_episode(kSmall, net.params, p.moving.image, p.fixed.image, c, a).theta ==
          run_episode(kSmall, net.params, p.moving.image, p.fixed.image, c, b).theta);
  }
}

TEST_CASE("meta_train") {
  const CasePair p = gen_phantom_pair(12, kGrid, 2.0);
  const std::vector<ImagePair> data{{0, p.moving.image, p.fixed.image}};
  const RegNet net = live_net(4);
  MetaConfig cfg;
  cfg.total_inner_iterations = 1;
  cfg.episode = plain_episode(1, 1e-3);
  cfg.beta_start = 1.0;
  cfg.beta_end = 1.0;
  cfg.seed = 5;

  SUBCASE("one episode with beta 1 is the episode output") {
    std::vector<MetaLogRow> seen;
    const MetaResult r = meta_train(data, net, cfg, [&](const MetaLogRow& row) { seen.push_back(row); });
    Rng rng(0);
    const EpisodeResult e = run_episode(kSmall, net.params, p.moving.image, p.fixed.image, cfg.episode, rng);
    CHECK(r.net.params == e.theta);
    REQUIRE(r.log.size() == 1);
    CHECK(seen == r.log);
    CHECK(r.log[0].beta == 1.0);
  }
  SUBCASE("fixed seed is reproducible") {
    cfg.total_inner_iterations = 4;
    cfg.episode.k = 2;
    cfg.episode.augment_enabled = true;
    cfg.beta_start = 0.5;
    cfg.beta_end = 1e-5;
    CHECK(meta_train(data, net, cfg).net.params == meta_train(data, net, cfg).net.params);
  }
  SUBCASE("configuration checks") {
    cfg.total_inner_iterations = 3;
    cfg.episode.k = 2;
    CHECK_THROWS_AS(meta_train(data, net, cfg), DomainError);
    CHECK_THROWS_AS(meta_train({}, net, MetaConfig{}), DomainError);
  }
}

TEST_CASE("train_conventional") {
  const CasePair p = gen_phantom_pair(13, kGrid, 2.0);
  const std::vector<ImagePair> data{{0, p.moving.image, p.fixed.image}};
  const RegNet net = live_net(6);
  ConventionalConfig cfg;
  cfg.batch = 1;
  cfg.augment_enabled = false;
  cfg.adam = AdamConfig{1e-3};
  cfg.iterations = 0;
  CHECK(train_conventional(data, net, cfg).net.params == net.params);
  cfg.iterations = 1;
  const TrainResult r = train_conventional(data, net, cfg);
  check_close(r.net.params, oracle::hand_adam_step(net, p.moving.image, p.fixed.image, 1e-3), 1e-6);
  CHECK(r.losses.size() == 1);
}

TEST_CASE("classical_register") {
  const CasePair p = gen_phantom_pair(14, kGrid, 2.0);
  ClassicalConfig cfg;
  cfg.iterations = 20;
  SUBCASE("moving == fixed stays at zero") {
    const ClassicalResult r = classical_register(p.moving.image, p.moving.image, cfg);
    CHECK(r.ddf == DisplacementField::zeros(kGrid));
    CHECK(r.loss_trace.front() == 0.0);
    CHECK(r.loss_trace.size() == 21);
  }
  SUBCASE("zero iterations") {
    cfg.iterations = 0;
    const ClassicalResult r = classical_register(p.moving.image, p.fixed.image, cfg);
    CHECK(r.ddf == DisplacementField::zeros(kGrid));
    CHECK(r.loss_trace.size() == 1);
  }
  SUBCASE("first SGD step follows the field gradient") {
    cfg.iterations = 1;
    const ClassicalResult r = classical_register(p.moving.image, p.fixed.image, cfg);
    Tape t;
    const Var u = t.variable(Tensor::channels(3, kGrid));
    t.backward(total_loss(t, t.constant(p.moving.image.grid), t.constant(p.fixed.image.grid), u, LossWeights{}));
    const Tensor& g = t.grad(u);
    for (std::size_t i = 0; i < g.size(); ++i) REQUIRE(r.ddf.vectors[i] == float(0.0f - 0.01 * g[i]));
  }
}

TEST_CASE("test_time_optimize") {
  const CasePair p = gen_phantom_pair(15, kGrid, 2.0);
  const RegNet net = live_net(8);
  TtoConfig cfg;
  cfg.adam = AdamConfig{1e-3};
  cfg.updates = 0;
  const TtoResult none = test_time_optimize(net, p.moving.image, p.fixed.image, cfg, 1);
  CHECK(none.ddf == predict_ddf(net, p.moving.image, p.fixed.image));
  CHECK(none.updates_applied == 0);

  cfg.updates = 5;
  const TtoResult a = test_time_optimize(net, p.moving.image, p.fixed.image, cfg, 1);
  const TtoResult b = test_time_optimize(net, p.moving.image, p.fixed.image, cfg, 1);
  CHECK(a.updates_applied == 5);
  CHECK(a.losses.size() == 5);
  CHECK(a.ddf == b.ddf);
  CHECK_FALSE(a.non_finite);
  CHECK(pair_loss(a.net, p.moving.image, p.fixed.image, LossWeights{}) <= a.losses.front());

  cfg.updates = -1;
  CHECK_THROWS_AS(test_time_optimize(net, p.moving.image, p.fixed.image, cfg, 1), DomainError);
}
