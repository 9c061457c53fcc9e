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

#include "metareg/meta.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "metareg/io.hpp"
#include "metareg/ops.hpp"

namespace metareg {

namespace {

void require_pair(const Volume& m, const Volume& f) {
  if (m.grid.dims() != f.grid.dims())
    throw ShapeError("moving and fixed grids differ: " + dims_to_string(m.grid.dims()) + " vs " + dims_to_string(f.grid.dims()));
}

void require_data(std::span<const ImagePair> data) {
  if (data.empty()) throw DomainError("training needs at least one pair");
  for (const ImagePair& p : data) require_pair(p.moving, p.fixed);
}

}  // namespace

void validate(const EpisodeConfig& c) {
  if (c.k < 0) throw DomainError("episode k must be >= 0");
  if (c.inner_batch < 1) throw DomainError("inner batch must be >= 1");
  validate(c.adam);
  validate(c.augment);
  validate(c.loss_weights);
}

std::int64_t MetaConfig::episodes() const {
  if (iterations_are_episodes) return total_inner_iterations;
  return episode.k > 0 ? total_inner_iterations / episode.k : 0;
}

LinearDecay MetaConfig::beta_schedule() const {
  return LinearDecay{beta_start, beta_end, std::max<std::int64_t>(1, total_inner_iterations)};
}

void validate(const MetaConfig& c) {
  validate(c.episode);
  if (c.episode.k < 1) throw DomainError("meta-training needs k >= 1");
  if (c.total_inner_iterations < 1) throw DomainError("total inner iterations must be positive");
  if (!c.iterations_are_episodes && c.total_inner_iterations % c.episode.k != 0)
    throw DomainError("total inner iterations must be divisible by k");
  if (c.max_consecutive_aborts < 0) throw DomainError("max consecutive aborts must be >= 0");
  validate(c.beta_schedule());
}

LossAndGrad batch_loss_and_grad(const RegNetConfig& config, const ParamVector& params,
                                std::span<const std::pair<Volume, Volume>> batch, const LossWeights& w) {
  if (batch.empty()) throw DomainError("empty mini-batch");
  Tape tape;
  const std::vector<Var> p = bind_parameters(tape, params);
  std::vector<Var> losses;
  for (const auto& [m, f] : batch) {
    require_pair(m, f);
    const Var mv = tape.constant(m.grid);
    const Var fv = tape.constant(f.grid);
    const Var ddf = regnet_forward<float>(tape, config, p, mv, fv);
    losses.push_back(total_loss(tape, mv, fv, ddf, w));
  }
  const Var loss = losses.size() == 1 ? losses[0] : mean(tape, std::span<const Var>(losses));
  const double value = tape.value(loss).item();
  if (!std::isfinite(value)) return {value, ParamVector(params.layout_ptr())};
  tape.backward(loss);
  return {value, gather_gradients(tape, params.layout_ptr())};
}

double pair_loss(const RegNet& net, const Volume& moving, const Volume& fixed, const LossWeights& w) {
  require_pair(moving, fixed);
  const DisplacementField ddf = predict_ddf(net, moving, fixed);
  return total_loss(moving.grid, fixed.grid, ddf.vectors, w);
}

std::vector<std::pair<Volume, Volume>> augmented_batch(const Volume& moving, const Volume& fixed, int count, bool enabled,
                                                       const AffineRanges& ranges, Rng& rng) {
  std::vector<std::pair<Volume, Volume>> batch;
  batch.reserve(static_cast<std::size_t>(count));
  for (int b = 0; b < count; ++b) {
    if (!enabled) {
      batch.emplace_back(moving, fixed);
      continue;
    }
    const AffineParams am = sample_affine(rng, ranges);
    const AffineParams af = sample_affine(rng, ranges);
    batch.emplace_back(apply_affine(moving, am), apply_affine(fixed, af));
  }
  return batch;
}

double EpisodeResult::mean_loss() const {
  if (losses.empty()) return 0.0;
  double s = 0.0;
  for (double l : losses) s += l;
  return s / static_cast<double>(losses.size());
}

EpisodeResult run_episode(const RegNetConfig& config, const ParamVector& omega, const Volume& moving, const Volume& fixed,
                          const EpisodeConfig& cfg, Rng& rng) {
  validate(cfg);
  require_pair(moving, fixed);
  EpisodeResult r{omega, {}};
  AdamState adam = AdamState::fresh(cfg.adam, omega);
  for (int step = 0; step < cfg.k; ++step) {
    const auto batch = augmented_batch(moving, fixed, cfg.inner_batch, cfg.augment_enabled, cfg.augment, rng);
    LossAndGrad lg = batch_loss_and_grad(config, r.theta, batch, cfg.loss_weights);
    if (!std::isfinite(lg.loss)) throw NonFiniteError("non-finite loss in inner step " + std::to_string(step), step);
    r.losses.push_back(lg.loss);
    r.theta = adam_step(adam, r.theta, lg.grad);
    if (!r.theta.all_finite()) throw NonFiniteError("non-finite parameters after inner step " + std::to_string(step), step);
  }
  return r;
}

ParamVector reptile_update(const ParamVector& omega, const ParamVector& theta, double beta) {
  require_same_layout(omega, theta, "reptile_update");
  if (!std::isfinite(beta)) throw DomainError("reptile_update: beta must be finite");
  if (beta == 0.0) return omega;
  if (beta == 1.0) return theta;
  ParamVector out = omega;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double w = omega[i];
    out[i] = static_cast<float>(w + beta * (static_cast<double>(theta[i]) - w));
  }
  return out;
}

MetaResult meta_train(std::span<const ImagePair> data, const RegNet& init, const MetaConfig& cfg,
                      const std::function<void(const MetaLogRow&)>& on_episode) {
  validate(cfg);
  require_data(data);
  MetaResult r{init, {}, 0};
  const LinearDecay schedule = cfg.iterations_are_episodes ? LinearDecay{cfg.beta_start, cfg.beta_end, cfg.episodes()}
                                                           : cfg.beta_schedule();
  int consecutive = 0;
  const std::int64_t episodes = cfg.episodes();
  for (std::int64_t e = 0; e < episodes; ++e) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(e)));
    const ImagePair& pair = data[rng.index(data.size())];
    MetaLogRow row;
    row.episode = e;
    row.cumulative_step = (e + 1) * cfg.episode.k;
    row.pair_id = pair.id;
    row.beta = linear_decay(schedule, cfg.iterations_are_episodes ? e : e * cfg.episode.k);
    try {
      const EpisodeResult ep = run_episode(r.net.config, r.net.params, pair.moving, pair.fixed, cfg.episode, rng);
      r.net.params = reptile_update(r.net.params, ep.theta, row.beta);
      row.mean_episode_loss = ep.mean_loss();
      consecutive = 0;
    } catch (const NonFiniteError& err) {
      row.mean_episode_loss = std::numeric_limits<double>::quiet_NaN();
      ++r.aborted_episodes;
      if (++consecutive > cfg.max_consecutive_aborts) {
        r.log.push_back(row);
        if (on_episode) on_episode(row);
        throw NonFiniteError("meta-training halted after " + std::to_string(consecutive) +
                                 " consecutive aborted episodes (last: " + err.what() + ")",
                             static_cast<int>(e));
      }
    }
    r.log.push_back(row);
    if (on_episode) on_episode(row);
  }
  return r;
}

void write_meta_log_header(std::ostream& os) { os << "episode,cumulative_step,pair_id,beta,mean_episode_loss\n"; }

void write_meta_log_row(std::ostream& os, const MetaLogRow& row) {
  os << row.episode << ',' << row.cumulative_step << ',' << row.pair_id << ',' << format_double(row.beta) << ','
     << (std::isnan(row.mean_episode_loss) ? std::string("nan") : format_double(row.mean_episode_loss)) << '\n';
}

TrainResult train_conventional(std::span<const ImagePair> data, const RegNet& init, const ConventionalConfig& cfg,
                               const std::function<void(std::int64_t, double)>& on_iteration) {
  if (cfg.iterations < 0) throw DomainError("iterations must be >= 0");
  if (cfg.batch < 1) throw DomainError("batch must be >= 1");
  validate(cfg.adam);
  validate(cfg.augment);
  validate(cfg.loss_weights);
  require_data(data);
  TrainResult r{init, {}};
  AdamState adam = AdamState::fresh(cfg.adam, init.params);
  for (std::int64_t it = 0; it < cfg.iterations; ++it) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(it)));
    std::vector<std::pair<Volume, Volume>> batch;
    for (int b = 0; b < cfg.batch; ++b) {
      const ImagePair& p = data[rng.index(data.size())];
      auto one = augmented_batch(p.moving, p.fixed, 1, cfg.augment_enabled, cfg.augment, rng);
      batch.push_back(std::move(one[0]));
    }
    LossAndGrad lg = batch_loss_and_grad(r.net.config, r.net.params, batch, cfg.loss_weights);
    if (!std::isfinite(lg.loss)) throw NonFiniteError("non-finite loss at iteration " + std::to_string(it), static_cast<int>(it));
    r.losses.push_back(lg.loss);
    r.net.params = adam_step(adam, r.net.params, lg.grad);
    if (on_iteration) on_iteration(it, lg.loss);
  }
  return r;
}

ClassicalResult classical_register(const Volume& moving, const Volume& fixed, const ClassicalConfig& cfg) {
  require_pair(moving, fixed);
  if (cfg.iterations < 0) throw DomainError("iterations must be >= 0");
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) throw DomainError("classical lr must be finite and >= 0");
  validate(cfg.loss_weights);
  DirectDdfModel model = DirectDdfModel::zeros(moving.extent());
  AdamState adam = AdamState::fresh(AdamConfig{cfg.lr}, model.params);
  ClassicalResult r;
  r.loss_trace.reserve(static_cast<std::size_t>(cfg.iterations) + 1);
  for (int it = 0; it <= cfg.iterations; ++it) {
    Tape tape;
    const Var m = tape.constant(moving.grid);
    const Var f = tape.constant(fixed.grid);
    const Var ddf = direct_ddf_forward(tape, model);
    const Var loss = total_loss(tape, m, f, ddf, cfg.loss_weights);
    const double value = tape.value(loss).item();
    if (!std::isfinite(value)) throw NonFiniteError("classical registration: non-finite loss at iteration " + std::to_string(it), it);
    r.loss_trace.push_back(value);
    if (it == cfg.iterations) break;
    tape.backward(loss);
    const ParamVector grad = gather_gradients(tape, model.params.layout_ptr());
    model.params = cfg.optimizer == ClassicalOptimizer::Sgd ? sgd_step(model.params, grad, cfg.lr)
                                                            : adam_step(adam, model.params, grad);
  }
  r.ddf = model.field();
  return r;
}

TtoResult test_time_optimize(const RegNet& omega, const Volume& moving, const Volume& fixed, const TtoConfig& cfg,
                             std::uint64_t seed) {
  require_pair(moving, fixed);
  if (cfg.updates < 0) throw DomainError("TTO updates must be >= 0");
  if (cfg.batch < 1) throw DomainError("TTO batch must be >= 1");
  validate(cfg.augment);
  validate(cfg.loss_weights);
  TtoResult r{omega, {}, {}, 0, false};
  AdamState adam = AdamState::fresh(cfg.adam, omega.params);
  Rng rng(seed);
  for (int step = 0; step < cfg.updates; ++step) {
    const auto batch = augmented_batch(moving, fixed, cfg.batch, cfg.augment_enabled, cfg.augment, rng);
    LossAndGrad lg = batch_loss_and_grad(omega.config, r.net.params, batch, cfg.loss_weights);
    if (!std::isfinite(lg.loss)) {
      r.non_finite = true;
      break;
    }
    ParamVector next = adam_step(adam, r.net.params, lg.grad);
    if (!next.all_finite()) {
      r.non_finite = true;
      break;
    }
    r.losses.push_back(lg.loss);
    r.net.params = std::move(next);
    ++r.updates_applied;
  }
  r.ddf = predict_ddf(r.net, moving, fixed);
  return r;
}

}  // namespace metareg
