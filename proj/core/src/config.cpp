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

#include "metareg/config.hpp"

#include <json.hpp>

#include "metareg/error.hpp"

namespace metareg {

using nlohmann::json;

NLOHMANN_JSON_SERIALIZE_ENUM(ClassicalOptimizer, {{ClassicalOptimizer::Sgd, "sgd"}, {ClassicalOptimizer::Adam, "adam"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AdamConfig, lr, beta1, beta2, eps)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AffineRanges, rotation, scale_min, scale_max, translation, shear)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LossWeights, alpha)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RegNetConfig, enc1, enc2, enc3, bottleneck, dec1, dec2, leaky_slope)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EpisodeConfig, k, inner_batch, adam, augment_enabled, augment, loss_weights)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(MetaConfig, total_inner_iterations, beta_start, beta_end, iterations_are_episodes,
                                   max_consecutive_aborts, episode, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ConventionalConfig, iterations, batch, adam, augment_enabled, augment, loss_weights, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ClassicalConfig, iterations, lr, optimizer, loss_weights)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TtoConfig, updates, batch, adam, augment_enabled, augment, loss_weights)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DataConfig, n_cases, n_train, extent, deform_magnitude, spacing_mm, landmark_radius_mm)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EvalConfig, record_timing)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RunConfig, preset, seed, data, net, meta, conventional, classical, tto, eval)

RunConfig paper_preset() {
  RunConfig c;
  c.preset = "paper";
  c.data = DataConfig{108, 88, 48, 2.0, 0.8, 2.0};
  c.meta.total_inner_iterations = 200000;
  c.meta.beta_start = 0.5;
  c.meta.beta_end = 1e-5;
  c.meta.episode.k = 10;
  c.meta.episode.inner_batch = 4;
  c.meta.episode.adam = AdamConfig{1e-5};
  c.conventional.iterations = 200000;
  c.conventional.batch = 4;
  c.conventional.adam = AdamConfig{1e-5};
  c.classical = ClassicalConfig{3000, 0.01, ClassicalOptimizer::Sgd, LossWeights{10.0}};
  c.tto.updates = 5;
  c.tto.batch = 1;
  c.tto.adam = c.meta.episode.adam;
  apply_seed(c, 0);
  return c;
}

RunConfig desk_preset() {
  RunConfig c = paper_preset();
  c.preset = "desk";
  c.data = DataConfig{28, 20, 32, 2.0, 0.8, 2.0};
  // 900 episodes; at 300 the meta init is still improving.
  c.meta.total_inner_iterations = 9000;
  c.meta.episode.adam = AdamConfig{1e-3};
  c.conventional.iterations = 9000;
  c.conventional.adam = c.meta.episode.adam;
  c.tto.adam = c.meta.episode.adam;
  return c;
}

RunConfig preset(const std::string& name) {
  if (name == "paper") return paper_preset();
  if (name == "desk") return desk_preset();
  throw DomainError("unknown preset '" + name + "' (expected paper or desk)");
}

void apply_seed(RunConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.meta.seed = derive_seed(seed, 1);  // SeedStream::Meta
  c.conventional.seed = derive_seed(seed, 2);  // SeedStream::Conventional
}

void validate(const RunConfig& c) {
  const DataConfig& d = c.data;
  if (d.n_cases <= 0) throw DomainError("empty dataset");
  if (d.n_cases < 2 || d.n_train < 1 || d.n_train >= d.n_cases) throw DomainError("data: need 1 <= n_train < n_cases");
  if (d.extent < 16 || d.extent % 4) throw DomainError("data: extent must be >= 16 and divisible by 4");
  if (!(d.deform_magnitude >= 0.0) || !(d.spacing_mm > 0.0) || !(d.landmark_radius_mm > 0.0))
    throw DomainError("data: magnitude must be >= 0, spacing and landmark radius positive");
  validate(c.net);
  validate(c.meta);
  if (c.conventional.iterations < 0 || c.conventional.batch < 1) throw DomainError("conventional: bad iterations or batch");
  validate(c.conventional.adam);
  validate(c.conventional.augment);
  if (c.classical.iterations < 0 || !(c.classical.lr >= 0.0)) throw DomainError("classical: bad iterations or lr");
  if (c.tto.updates < 0 || c.tto.batch < 1) throw DomainError("tto: bad updates or batch");
  validate(c.tto.adam);
  validate(c.tto.augment);
}

std::string config_to_json(const RunConfig& c, int indent) { return json(c).dump(indent); }

RunConfig run_config_from_json(const std::string& text) {
  try {
    return json::parse(text).get<RunConfig>();
  } catch (const json::exception& e) {
    throw DomainError(std::string("config: ") + e.what());
  }
}

namespace {

void check_keys(const json& schema, const json& patch, const std::string& where) {
  if (!patch.is_object()) return;
  for (const auto& [key, value] : patch.items()) {
    if (!schema.contains(key)) throw DomainError("config: unknown key '" + where + key + "'");
    if (schema[key].is_object()) check_keys(schema[key], value, where + key + ".");
  }
}

}  // namespace

RunConfig overlay_json(const RunConfig& base, const std::string& text) {
  json patch;
  try {
    patch = json::parse(text);
  } catch (const json::exception& e) {
    throw DomainError(std::string("config: ") + e.what());
  }
  if (!patch.is_object()) throw DomainError("config: top level must be an object");
  json merged = base;
  check_keys(merged, patch, "");
  merged.merge_patch(patch);
  try {
    return merged.get<RunConfig>();
  } catch (const json::exception& e) {
    throw DomainError(std::string("config: ") + e.what());
  }
}

}  // namespace metareg
