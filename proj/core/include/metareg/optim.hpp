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

#include "metareg/param_vector.hpp"

namespace metareg {

/// params - lr * grads
ParamVector sgd_step(const ParamVector& params, const ParamVector& grads, double lr);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

void validate(const AdamConfig& c);

/// Moments are kept in double; parameters stay float.
struct AdamState {
  AdamConfig config;
  ParamVector64 m;
  ParamVector64 v;
  std::int64_t t = 0;

  /// Zero moments laid out like `params`.
  static AdamState fresh(const AdamConfig& config, const ParamVector& params);
};

/// One bias-corrected Adam step. Updates `state` in place and returns the
/// new parameters.
ParamVector adam_step(AdamState& state, const ParamVector& params, const ParamVector& grads);

struct LinearDecay {
  double start_value = 0.5;
  double end_value = 1e-5;
  std::int64_t total_steps = 1;

  bool operator==(const LinearDecay&) const = default;
};

void validate(const LinearDecay& s);

/// start + (end - start) * min(step, total) / total; negative steps clamp to 0.
double linear_decay(const LinearDecay& s, std::int64_t step);

}  // namespace metareg
