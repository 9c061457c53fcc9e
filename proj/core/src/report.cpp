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

#include "metareg/report.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "metareg/error.hpp"
#include "metareg/io.hpp"

namespace metareg {

const char* method_name(Method m) {
  switch (m) {
    case Method::Classical:
      return "classical";
    case Method::Conventional:
      return "conventional";
    case Method::Meta:
      return "meta";
    case Method::MetaTto:
      return "meta_tto";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : all_methods())
    if (name == method_name(m)) return m;
  throw DomainError("unknown method '" + name + "' (expected classical, conventional, meta or meta_tto)");
}

std::vector<Method> all_methods() { return {Method::Classical, Method::Conventional, Method::Meta, Method::MetaTto}; }

std::vector<Method> parse_methods(const std::string& list) {
  if (list == "all") return all_methods();
  std::vector<Method> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    Method m = parse_method(item);
    bool seen = false;
    for (Method o : out) seen |= o == m;
    if (!seen) out.push_back(m);
  }
  if (out.empty()) throw DomainError("no methods selected");
  return out;
}

void write_metrics_csv(std::ostream& os, std::span<const MetricsRecord> records) {
  os << "method,pair_id,dsc,tre_mm,wall_time_s\n";
  for (const auto& r : records)
    os << method_name(r.method) << ',' << r.pair_id << ',' << format_double(r.dsc) << ',' << format_double(r.tre_mm) << ','
       << format_double(r.wall_time_s) << '\n';
}

std::vector<MetricsRecord> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "method,pair_id,dsc,tre_mm,wall_time_s")
    throw DomainError("metrics csv: bad header");
  std::vector<MetricsRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 5) throw DomainError("metrics csv: expected 5 fields in '" + line + "'");
    MetricsRecord r;
    r.method = parse_method(f[0]);
    r.pair_id = static_cast<std::size_t>(std::stoull(f[1]));
    r.dsc = parse_double(f[2]);
    r.tre_mm = parse_double(f[3]);
    r.wall_time_s = parse_double(f[4]);
    out.push_back(r);
  }
  return out;
}

double mean(std::span<const double> v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
  if (v.size() < 2) return std::nan("");
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::vector<MethodSummary> summarize(std::span<const MetricsRecord> records) {
  std::vector<Method> order;
  for (const auto& r : records) {
    bool seen = false;
    for (Method m : order) seen |= m == r.method;
    if (!seen) order.push_back(r.method);
  }
  std::vector<MethodSummary> out;
  for (Method m : order) {
    std::vector<double> dsc, tre, time;
    for (const auto& r : records) {
      if (r.method != m) continue;
      dsc.push_back(r.dsc);
      tre.push_back(r.tre_mm);
      time.push_back(r.wall_time_s);
    }
    out.push_back({m, dsc.size(), mean(dsc), sample_std(dsc), mean(tre), sample_std(tre), mean(time)});
  }
  return out;
}

void write_summary_csv(std::ostream& os, std::span<const MethodSummary> rows) {
  os << "method,n,dsc_mean,dsc_std,tre_mean_mm,tre_std_mm,wall_time_mean_s\n";
  for (const auto& r : rows)
    os << method_name(r.method) << ',' << r.n << ',' << format_double(r.dsc_mean) << ',' << format_double(r.dsc_std) << ','
       << format_double(r.tre_mean_mm) << ',' << format_double(r.tre_std_mm) << ',' << format_double(r.wall_time_mean_s)
       << '\n';
}

std::string mean_pm_std(double mean, double std, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f ± %.*f", digits, mean, digits, std);
  return buf;
}

namespace {

// JSON has no NaN; a missing statistic is written as null.
nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

std::string report_json(const RunConfig& config, std::span<const MethodSummary> summary,
                        const std::map<std::string, std::string>& errors, const std::string& records_file) {
  nlohmann::ordered_json doc;
  doc["config"] = nlohmann::json::parse(config_to_json(config));
  doc["records"] = records_file;
  auto& rows = doc["summary"] = nlohmann::ordered_json::array();
  for (const auto& s : summary) {
    nlohmann::ordered_json row;
    row["method"] = method_name(s.method);
    row["n"] = s.n;
    row["dsc_mean"] = number(s.dsc_mean);
    row["dsc_std"] = number(s.dsc_std);
    row["tre_mean_mm"] = number(s.tre_mean_mm);
    row["tre_std_mm"] = number(s.tre_std_mm);
    row["wall_time_mean_s"] = number(s.wall_time_mean_s);
    row["dsc"] = mean_pm_std(s.dsc_mean, s.dsc_std, 2);
    row["tre_mm"] = mean_pm_std(s.tre_mean_mm, s.tre_std_mm, 2);
    rows.push_back(row);
  }
  doc["errors"] = errors;
  return doc.dump(2) + "\n";
}

}  // namespace metareg
