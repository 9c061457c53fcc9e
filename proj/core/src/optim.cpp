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

#include "metareg/optim.hpp"

#include <algorithm>
#include <cmath>

namespace metareg {

ParamVector sgd_step(const ParamVector& params, const ParamVector& grads, double lr) {
  require_same_layout(params, grads, "sgd_step");
  ParamVector out = params;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(static_cast<double>(params[i]) - lr * static_cast<double>(grads[i]));
  return out;
}

void validate(const AdamConfig& c) {
  if (!(c.lr >= 0.0 && std::isfinite(c.lr))) throw DomainError("adam: lr must be finite and >= 0");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0))
    throw DomainError("adam: betas must lie in [0,1)");
  if (!(c.eps > 0.0)) throw DomainError("adam: eps must be positive");
}

AdamState AdamState::fresh(const AdamConfig& config, const ParamVector& params) {
  validate(config);
  return AdamState{config, ParamVector64(params.layout_ptr()), ParamVector64(params.layout_ptr()), 0};
}

ParamVector adam_step(AdamState& s, const ParamVector& params, const ParamVector& grads) {
  require_same_layout(params, grads, "adam_step");
  if (s.m.size() != params.size() || !(s.m.layout() == params.layout()))
    throw ShapeError("adam_step: optimizer state layout differs from parameters");
  const AdamConfig& c = s.config;
  ++s.t;
  const double corr1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.t));
  const double corr2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.t));
  ParamVector out = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    s.m[i] = c.beta1 * s.m[i] + (1.0 - c.beta1) * g;
    s.v[i] = c.beta2 * s.v[i] + (1.0 - c.beta2) * g * g;
    const double mhat = s.m[i] / corr1;
    const double vhat = s.v[i] / corr2;
    out[i] = static_cast<float>(static_cast<double>(params[i]) - c.lr * mhat / (std::sqrt(vhat) + c.eps));
  }
  return out;
}

void validate(const LinearDecay& s) {
  if (s.total_steps <= 0) throw DomainError("linear decay needs total_steps > 0");
  if (!std::isfinite(s.start_value) || !std::isfinite(s.end_value)) throw DomainError("linear decay values must be finite");
}

double linear_decay(const LinearDecay& s, std::int64_t step) {
  validate(s);
  const std::int64_t k = std::clamp<std::int64_t>(step, 0, s.total_steps);
  if (k == s.total_steps) return s.end_value;
  return s.start_value + (s.end_value - s.start_value) * static_cast<double>(k) / static_cast<double>(s.total_steps);
}

}  // namespace metareg
