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

#include "metareg/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "metareg/error.hpp"
#include "metareg/io.hpp"
#include "metareg/metrics.hpp"
#include "metareg/transforms.hpp"

namespace metareg {

namespace fs = std::filesystem;

std::uint64_t stream_seed(std::uint64_t seed, SeedStream s) { return derive_seed(seed, static_cast<std::uint64_t>(s)); }

Dataset make_dataset(const RunConfig& c) {
  if (c.data.n_cases <= 0) throw DomainError("empty dataset");
  validate(c);
  const Extent e{c.data.extent, c.data.extent, c.data.extent};
  PhantomOptions opts;
  opts.spacing_mm = c.data.spacing_mm;
  opts.landmark_radius_mm = c.data.landmark_radius_mm;
  const std::uint64_t base = stream_seed(c.seed, SeedStream::Data);
  Dataset d;
  for (int i = 0; i < c.data.n_cases; ++i)
    d.cases.push_back(gen_phantom_pair(derive_seed(base, static_cast<std::uint64_t>(i)), e, c.data.deform_magnitude, opts));
  const double fraction = static_cast<double>(c.data.n_train) / c.data.n_cases;
  d.split = split_dataset(d.cases.size(), fraction, stream_seed(c.seed, SeedStream::Split));
  return d;
}

namespace {

std::string case_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case_%04zu", i);
  return buf;
}

}  // namespace

void save_dataset(const fs::path& dir, const Dataset& d) {
  if (d.cases.empty()) throw DomainError("empty dataset");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(IoError::Kind::Write, "cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < d.cases.size(); ++i) {
    const fs::path cdir = dir / case_name(i);
    fs::create_directories(cdir, ec);
    if (ec) throw IoError(IoError::Kind::Write, "cannot create " + cdir.string() + ": " + ec.message());
    save_case_pair(cdir, d.cases[i]);
  }
  nlohmann::ordered_json j;
  j["n_cases"] = d.cases.size();
  j["train"] = d.split.train;
  j["test"] = d.split.test;
  std::ofstream os(dir / "dataset.json", std::ios::binary);
  os << j.dump(2) << '\n';
  if (!os) throw IoError(IoError::Kind::Write, "cannot write " + (dir / "dataset.json").string());
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path meta = dir / "dataset.json";
  std::ifstream is(meta, std::ios::binary);
  if (!is) throw IoError(IoError::Kind::Missing, "no dataset at " + dir.string() + " (missing dataset.json)");
  Dataset d;
  std::size_t n = 0;
  try {
    const auto j = nlohmann::json::parse(is);
    n = j.at("n_cases").get<std::size_t>();
    d.split.train = j.at("train").get<std::vector<std::size_t>>();
    d.split.test = j.at("test").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoError::Kind::BadHeader, meta.string() + ": " + e.what());
  }
  if (n == 0) throw DomainError("empty dataset");
  for (std::size_t id : d.split.train)
    if (id >= n) throw IoError(IoError::Kind::BadHeader, meta.string() + ": case id out of range");
  for (std::size_t id : d.split.test)
    if (id >= n) throw IoError(IoError::Kind::BadHeader, meta.string() + ": case id out of range");
  for (std::size_t i = 0; i < n; ++i) d.cases.push_back(load_case_pair(dir / case_name(i)));
  return d;
}

std::vector<ImagePair> image_pairs(const Dataset& d, std::span<const std::size_t> ids) {
  std::vector<ImagePair> out;
  out.reserve(ids.size());
  for (std::size_t id : ids) out.push_back({id, d.cases.at(id).moving.image, d.cases.at(id).fixed.image});
  return out;
}

RegNet initial_network(const RunConfig& c) {
  Rng rng(stream_seed(c.seed, SeedStream::NetInit));
  return init_regnet(c.net, rng);
}

PairScore score_pair(const CasePair& p, const DisplacementField& ddf) {
  PairScore s;
  s.dsc = dice(warp_mask(p.moving.gland_mask, ddf), p.fixed.gland_mask);
  s.tre_mm = tre(p.moving.landmarks, p.fixed.landmarks, ddf, p.moving.image.spacing_mm).tre_mm;
  return s;
}

Evaluation evaluate(const RunConfig& c, const Dataset& data, std::span<const Method> methods, const RegNet* conventional,
                    const RegNet* meta) {
  using clock = std::chrono::steady_clock;
  Evaluation ev;
  const std::uint64_t tto_base = stream_seed(c.seed, SeedStream::Tto);
  for (Method m : methods) {
    const RegNet* net = m == Method::Conventional ? conventional : (m == Method::Classical ? nullptr : meta);
    if (m != Method::Classical && !net) {
      ev.errors[method_name(m)] = std::string("no checkpoint for method ") + method_name(m);
      continue;
    }
    try {
      std::vector<MetricsRecord> rows;
      for (std::size_t id : data.split.test) {
        const CasePair& p = data.cases.at(id);
        DisplacementField ddf;
        const auto t0 = clock::now();
        switch (m) {
          case Method::Classical:
            ddf = classical_register(p.moving.image, p.fixed.image, c.classical).ddf;
            break;
          case Method::Conventional:
          case Method::Meta:
            ddf = predict_ddf(*net, p.moving.image, p.fixed.image);
            break;
          case Method::MetaTto:
            ddf = test_time_optimize(*net, p.moving.image, p.fixed.image, c.tto, derive_seed(tto_base, id)).ddf;
            break;
        }
        const double secs = std::chrono::duration<double>(clock::now() - t0).count();
        const PairScore s = score_pair(p, ddf);
        rows.push_back({m, id, s.dsc, s.tre_mm, c.eval.record_timing ? secs : 0.0});
      }
      ev.records.insert(ev.records.end(), rows.begin(), rows.end());
    } catch (const std::exception& e) {
      ev.errors[method_name(m)] = e.what();
    }
  }
  return ev;
}

}  // namespace metareg
