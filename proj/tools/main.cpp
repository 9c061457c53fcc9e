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

// metareg command-line front end.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "metareg/config.hpp"
#include "metareg/error.hpp"
#include "metareg/io.hpp"
#include "metareg/meta.hpp"
#include "metareg/pipeline.hpp"
#include "metareg/report.hpp"

namespace fs = std::filesystem;
using namespace metareg;

namespace {

struct Common {
  std::string config_path;
  std::string preset = "desk";
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string data;  // defaults to <out>/data
};

void add_common(CLI::App* cmd, Common& o) {
  cmd->add_option("--config", o.config_path, "JSON file overlaid on the preset")->check(CLI::ExistingFile);
  cmd->add_option("--preset", o.preset, "Base hyperparameters")->check(CLI::IsMember({"paper", "desk"}));
  cmd->add_option("--seed", o.seed, "Global seed");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--data", o.data, "Dataset directory (default <out>/data)");
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError(IoError::Kind::Missing, "cannot read " + p.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  os << text;
  if (!os) throw IoError(IoError::Kind::Write, "cannot write " + p.string());
}

// Preset, then --config overlay, then --seed. Sub-seeds always follow the
// top-level seed.
RunConfig resolve(const Common& o) {
  RunConfig c = preset(o.preset);
  if (!o.config_path.empty()) c = overlay_json(c, read_file(o.config_path));
  if (o.seed) c.seed = *o.seed;
  apply_seed(c, c.seed);
  validate(c);
  return c;
}

fs::path out_dir(const Common& o) {
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw IoError(IoError::Kind::Write, "cannot create " + o.out + ": " + ec.message());
  return o.out;
}

fs::path data_dir(const Common& o) { return o.data.empty() ? fs::path(o.out) / "data" : fs::path(o.data); }

void save_config(const fs::path& dir, const RunConfig& c) { write_file(dir / "config.json", config_to_json(c) + "\n"); }

void log(const char* fmt, auto... args) {
  std::fprintf(stderr, fmt, args...);
  std::fputc('\n', stderr);
}

int cmd_gen_data(const Common& o) {
  const RunConfig c = resolve(o);
  const fs::path dir = data_dir(o);
  log("generating %d cases (%d^3) into %s", c.data.n_cases, c.data.extent, dir.string().c_str());
  const Dataset d = make_dataset(c);
  save_dataset(dir, d);
  save_config(out_dir(o), c);
  log("train %zu, test %zu", d.split.train.size(), d.split.test.size());
  return 0;
}

int cmd_train(const Common& o) {
  const RunConfig c = resolve(o);
  const fs::path out = out_dir(o);
  save_config(out, c);
  const Dataset d = load_dataset(data_dir(o));
  const auto train = image_pairs(d, d.split.train);
  std::ofstream csv(out / "train_log.csv", std::ios::binary);
  csv << "iteration,loss\n";
  const std::int64_t every = std::max<std::int64_t>(1, c.conventional.iterations / 20);
  const TrainResult r = train_conventional(train, initial_network(c), c.conventional, [&](std::int64_t it, double loss) {
    csv << it << ',' << format_double(loss) << '\n';
    if ((it + 1) % every == 0) log("iteration %lld loss %.6g", static_cast<long long>(it + 1), loss);
  });
  if (!csv) throw IoError(IoError::Kind::Write, "cannot write train_log.csv");
  save_checkpoint(out / "conventional", r.net);
  log("wrote %s", (out / "conventional.manifest").string().c_str());
  return 0;
}

int cmd_meta_train(const Common& o) {
  const RunConfig c = resolve(o);
  const fs::path out = out_dir(o);
  save_config(out, c);
  const Dataset d = load_dataset(data_dir(o));
  const auto train = image_pairs(d, d.split.train);
  std::ofstream csv(out / "meta_log.csv", std::ios::binary);
  write_meta_log_header(csv);
  const std::int64_t every = std::max<std::int64_t>(1, c.meta.episodes() / 20);
  const MetaResult r = meta_train(train, initial_network(c), c.meta, [&](const MetaLogRow& row) {
    write_meta_log_row(csv, row);
    if ((row.episode + 1) % every == 0)
      log("episode %lld beta %.4g loss %.6g", static_cast<long long>(row.episode + 1), row.beta, row.mean_episode_loss);
  });
  if (!csv) throw IoError(IoError::Kind::Write, "cannot write meta_log.csv");
  if (r.aborted_episodes) log("%d episodes aborted on non-finite loss", r.aborted_episodes);
  save_checkpoint(out / "meta", r.net);
  log("wrote %s", (out / "meta.manifest").string().c_str());
  return 0;
}

std::optional<RegNet> try_checkpoint(const fs::path& stem) {
  if (!fs::exists(stem.string() + ".manifest")) return std::nullopt;
  return load_checkpoint(stem);
}

void print_summary(std::span<const MethodSummary> rows) {
  std::printf("%-13s %4s %-16s %-16s %10s\n", "method", "n", "DSC", "TRE (mm)", "time (s)");
  for (const auto& s : rows)
    std::printf("%-13s %4zu %-16s %-16s %10.3f\n", method_name(s.method), s.n, mean_pm_std(s.dsc_mean, s.dsc_std, 3).c_str(),
                mean_pm_std(s.tre_mean_mm, s.tre_std_mm, 3).c_str(), s.wall_time_mean_s);
}

// Writes <prefix>metrics.csv, <prefix>summary.csv and <prefix>report.json.
int run_evaluation(const Common& o, const RunConfig& c, std::span<const Method> methods, const fs::path& conventional,
                   const fs::path& meta, const std::string& prefix) {
  const fs::path out = out_dir(o);
  save_config(out, c);
  const Dataset d = load_dataset(data_dir(o));
  std::optional<RegNet> conv, mnet;
  for (Method m : methods) {
    if (m == Method::Conventional && !conv) conv = try_checkpoint(conventional);
    if ((m == Method::Meta || m == Method::MetaTto) && !mnet) mnet = try_checkpoint(meta);
  }
  const Evaluation ev = evaluate(c, d, methods, conv ? &*conv : nullptr, mnet ? &*mnet : nullptr);
  std::ostringstream metrics, summary;
  write_metrics_csv(metrics, ev.records);
  const auto rows = summarize(ev.records);
  write_summary_csv(summary, rows);
  write_file(out / (prefix + "metrics.csv"), metrics.str());
  write_file(out / (prefix + "summary.csv"), summary.str());
  write_file(out / (prefix + "report.json"), report_json(c, rows, ev.errors, prefix + "metrics.csv"));
  print_summary(rows);
  for (const auto& [method, msg] : ev.errors) log("metareg: %s: %s", method.c_str(), msg.c_str());
  return ev.errors.empty() ? 0 : 1;
}

int cmd_single(const Common& o, Method m, const std::string& checkpoint, std::optional<std::size_t> pair) {
  const RunConfig c = resolve(o);
  const std::vector<Method> methods{m};
  if (!pair) return run_evaluation(o, c, methods, checkpoint, checkpoint, std::string(method_name(m)) + "_");
  // One pair: also keep the field.
  const fs::path out = out_dir(o);
  save_config(out, c);
  const Dataset d = load_dataset(data_dir(o));
  if (*pair >= d.cases.size()) throw DomainError("pair id out of range");
  const CasePair& p = d.cases[*pair];
  DisplacementField ddf;
  std::vector<double> losses;
  const auto t0 = std::chrono::steady_clock::now();
  if (m == Method::Classical) {
    ClassicalResult r = classical_register(p.moving.image, p.fixed.image, c.classical);
    ddf = std::move(r.ddf);
    losses = std::move(r.loss_trace);
  } else {
    const RegNet net = load_checkpoint(checkpoint);
    TtoResult r = test_time_optimize(net, p.moving.image, p.fixed.image, c.tto,
                                     derive_seed(stream_seed(c.seed, SeedStream::Tto), *pair));
    if (r.non_finite) log("stopped after %d updates on a non-finite loss", r.updates_applied);
    ddf = std::move(r.ddf);
    losses = std::move(r.losses);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string stem = std::string(method_name(m)) + "_pair" + std::to_string(*pair);
  save_ddf(out / (stem + "_ddf"), ddf);
  std::ostringstream trace;
  trace << "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) trace << i << ',' << format_double(losses[i]) << '\n';
  write_file(out / (stem + "_loss.csv"), trace.str());
  const PairScore s = score_pair(p, ddf);
  std::printf("pair %zu: dsc %.4f tre %.3f mm time %.3f s\n", *pair, s.dsc, s.tre_mm, secs);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-learned deformable registration on synthetic phantoms"};
  app.require_subcommand(1);
  Common o;

  auto* gen = app.add_subcommand("gen-data", "Generate the phantom dataset");
  auto* train = app.add_subcommand("train", "Train the conventional network");
  auto* meta = app.add_subcommand("meta-train", "Meta-train the network initialization");
  auto* classical = app.add_subcommand("register-classical", "Iterative registration of test pairs");
  auto* tto = app.add_subcommand("tto", "Test-time optimization from a meta checkpoint");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate methods on the test split");
  auto* compare = app.add_subcommand("compare", "Generate, train, meta-train and evaluate all methods");
  for (auto* cmd : {gen, train, meta, classical, tto, evaluate_cmd, compare}) add_common(cmd, o);

  std::optional<std::size_t> pair;
  std::string checkpoint, conv_checkpoint, meta_checkpoint, methods = "all";
  classical->add_option("--pair", pair, "Register one case and write its field");
  tto->add_option("--pair", pair, "Register one case and write its field");
  tto->add_option("--checkpoint", checkpoint, "Meta checkpoint stem (default <out>/meta)");
  evaluate_cmd->add_option("--methods", methods, "classical,conventional,meta,meta_tto or all");
  evaluate_cmd->add_option("--conventional-checkpoint", conv_checkpoint, "Default <out>/conventional");
  evaluate_cmd->add_option("--meta-checkpoint", meta_checkpoint, "Default <out>/meta");

  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path out(o.out);
    if (conv_checkpoint.empty()) conv_checkpoint = (out / "conventional").string();
    if (meta_checkpoint.empty()) meta_checkpoint = (out / "meta").string();
    if (checkpoint.empty()) checkpoint = meta_checkpoint;

    if (gen->parsed()) return cmd_gen_data(o);
    if (train->parsed()) return cmd_train(o);
    if (meta->parsed()) return cmd_meta_train(o);
    if (classical->parsed()) return cmd_single(o, Method::Classical, "", pair);
    if (tto->parsed()) return cmd_single(o, Method::MetaTto, checkpoint, pair);
    if (evaluate_cmd->parsed()) {
      const RunConfig c = resolve(o);
      return run_evaluation(o, c, parse_methods(methods), conv_checkpoint, meta_checkpoint, "");
    }
    if (compare->parsed()) {
      if (!fs::exists(data_dir(o) / "dataset.json")) cmd_gen_data(o);
      cmd_train(o);
      cmd_meta_train(o);
      const RunConfig c = resolve(o);
      return run_evaluation(o, c, all_methods(), out / "conventional", out / "meta", "");
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "metareg: error: %s\n", e.what());
    return 1;
  }
  return 1;
}
