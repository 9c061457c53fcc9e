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
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "metareg/image.hpp"
#include "metareg/losses.hpp"
#include "metareg/models.hpp"
#include "metareg/optim.hpp"
#include "metareg/rng.hpp"
#include "metareg/transforms.hpp"

namespace metareg {

/// A moving/fixed image pair with a caller-chosen id (used in logs).
struct ImagePair {
  std::size_t id = 0;
  Volume moving;
  Volume fixed;
};

struct EpisodeConfig {
  int k = 10;           // inner mini-batches per episode
  int inner_batch = 4;  // augmented copies of the pair per mini-batch
  AdamConfig adam{1e-5};
  bool augment_enabled = true;
  AffineRanges augment;
  LossWeights loss_weights;

  bool operator==(const EpisodeConfig&) const = default;
};

void validate(const EpisodeConfig& c);

struct MetaConfig {
  std::int64_t total_inner_iterations = 3000;
  double beta_start = 0.5;
  double beta_end = 1e-5;
  /// When set, total_inner_iterations counts episodes instead of inner
  /// steps, and beta decays per episode.
  bool iterations_are_episodes = false;
  int max_consecutive_aborts = 3;
  EpisodeConfig episode;
  std::uint64_t seed = 0;

  std::int64_t episodes() const;
  LinearDecay beta_schedule() const;
  bool operator==(const MetaConfig&) const = default;
};

void validate(const MetaConfig& c);

struct ConventionalConfig {
  std::int64_t iterations = 3000;
  int batch = 4;
  AdamConfig adam{1e-5};
  bool augment_enabled = true;
  AffineRanges augment;
  LossWeights loss_weights;
  std::uint64_t seed = 0;

  bool operator==(const ConventionalConfig&) const = default;
};

enum class ClassicalOptimizer { Sgd, Adam };

struct ClassicalConfig {
  int iterations = 3000;
  double lr = 0.01;
  ClassicalOptimizer optimizer = ClassicalOptimizer::Sgd;
  LossWeights loss_weights;

  bool operator==(const ClassicalConfig&) const = default;
};

struct TtoConfig {
  int updates = 5;
  int batch = 1;
  AdamConfig adam{1e-5};
  bool augment_enabled = false;
  AffineRanges augment;
  LossWeights loss_weights;

  bool operator==(const TtoConfig&) const = default;
};

struct LossAndGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// Mean total_loss over `batch` and its gradient with respect to `params`.
LossAndGrad batch_loss_and_grad(const RegNetConfig& config, const ParamVector& params,
                                std::span<const std::pair<Volume, Volume>> batch, const LossWeights& w);

/// total_loss of the network's prediction on one raw pair (no gradient).
double pair_loss(const RegNet& net, const Volume& moving, const Volume& fixed, const LossWeights& w);

/// `count` (moving, fixed) copies, each image independently augmented when
/// enabled.
std::vector<std::pair<Volume, Volume>> augmented_batch(const Volume& moving, const Volume& fixed, int count, bool enabled,
                                                       const AffineRanges& ranges, Rng& rng);

struct EpisodeResult {
  ParamVector theta;
  std::vector<double> losses;  // one per inner step
  double mean_loss() const;
};

/// theta = omega, fresh Adam, then k Adam steps on augmented mini-batches of
/// the single pair. Throws NonFiniteError carrying the inner step index.
EpisodeResult run_episode(const RegNetConfig& config, const ParamVector& omega, const Volume& moving, const Volume& fixed,
                          const EpisodeConfig& cfg, Rng& rng);

/// omega + beta (theta - omega), evaluated in double.
ParamVector reptile_update(const ParamVector& omega, const ParamVector& theta, double beta);

struct MetaLogRow {
  std::int64_t episode = 0;
  std::int64_t cumulative_step = 0;
  std::size_t pair_id = 0;
  double beta = 0.0;
  double mean_episode_loss = 0.0;  // NaN for an aborted episode
  bool operator==(const MetaLogRow&) const = default;
};

struct MetaResult {
  RegNet net;
  std::vector<MetaLogRow> log;
  int aborted_episodes = 0;
};

/// Reptile outer loop starting from `init`. `on_episode` sees every log row
/// as it is produced.
MetaResult meta_train(std::span<const ImagePair> data, const RegNet& init, const MetaConfig& cfg,
                      const std::function<void(const MetaLogRow&)>& on_episode = {});

void write_meta_log_header(std::ostream& os);
void write_meta_log_row(std::ostream& os, const MetaLogRow& row);

struct TrainResult {
  RegNet net;
  std::vector<double> losses;  // one per iteration
};

/// Plain Adam training over randomly drawn pairs.
TrainResult train_conventional(std::span<const ImagePair> data, const RegNet& init, const ConventionalConfig& cfg,
                               const std::function<void(std::int64_t, double)>& on_iteration = {});

struct ClassicalResult {
  DisplacementField ddf;
  std::vector<double> loss_trace;  // iterations + 1 values, before each step and after the last
};

/// Direct optimization of a zero-initialized displacement field.
ClassicalResult classical_register(const Volume& moving, const Volume& fixed, const ClassicalConfig& cfg);

struct TtoResult {
  RegNet net;
  DisplacementField ddf;
  std::vector<double> losses;  // one per applied update, before the step
  int updates_applied = 0;
  bool non_finite = false;  // stopped early; net holds the last finite parameters
};

TtoResult test_time_optimize(const RegNet& omega, const Volume& moving, const Volume& fixed, const TtoConfig& cfg,
                             std::uint64_t seed);

}  // namespace metareg
