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

#pragma once

#include <cstdint>
#include <string>

#include "metareg/meta.hpp"
#include "metareg/models.hpp"

namespace metareg {

struct DataConfig {
  int n_cases = 28;
  int n_train = 20;
  int extent = 32;
  double deform_magnitude = 2.0;
  double spacing_mm = 0.8;
  double landmark_radius_mm = 2.0;

  bool operator==(const DataConfig&) const = default;
};

struct EvalConfig {
  /// When false every wall_time_s is written as 0 so that reports are
  /// byte-identical across runs.
  bool record_timing = true;

  bool operator==(const EvalConfig&) const = default;
};

/// Every hyperparameter of a run. Presets "paper" and "desk" differ only in
/// scale-dependent values.
struct RunConfig {
  std::string preset = "desk";
  std::uint64_t seed = 0;
  DataConfig data;
  RegNetConfig net;
  MetaConfig meta;
  ConventionalConfig conventional;
  ClassicalConfig classical;
  TtoConfig tto;
  EvalConfig eval;

  bool operator==(const RunConfig&) const = default;
};

RunConfig paper_preset();
RunConfig desk_preset();
RunConfig preset(const std::string& name);

/// Propagates the top-level seed into the sub-configs that carry one.
void apply_seed(RunConfig& c, std::uint64_t seed);

void validate(const RunConfig& c);

std::string config_to_json(const RunConfig& c, int indent = 2);

/// Parses a full config.
RunConfig run_config_from_json(const std::string& text);

/// Overlays a partial JSON document on `base`. Keys that do not exist in
/// the config schema are rejected.
RunConfig overlay_json(const RunConfig& base, const std::string& text);

}  // namespace metareg
