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

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "metareg/config.hpp"

namespace metareg {

enum class Method { Classical, Conventional, Meta, MetaTto };

const char* method_name(Method m);
Method parse_method(const std::string& name);
/// Comma-separated list, e.g. "classical,meta_tto". "all" selects every method.
std::vector<Method> parse_methods(const std::string& list);
std::vector<Method> all_methods();

struct MetricsRecord {
  Method method = Method::Classical;
  std::size_t pair_id = 0;
  double dsc = 0.0;
  double tre_mm = 0.0;
  double wall_time_s = 0.0;

  bool operator==(const MetricsRecord&) const = default;
};

/// Header "method,pair_id,dsc,tre_mm,wall_time_s", then one row per record
/// in the given order. Doubles use shortest round-trip formatting.
void write_metrics_csv(std::ostream& os, std::span<const MetricsRecord> records);
std::vector<MetricsRecord> read_metrics_csv(std::istream& is);

double mean(std::span<const double> v);
/// n - 1 denominator; NaN for fewer than two values.
double sample_std(std::span<const double> v);

struct MethodSummary {
  Method method = Method::Classical;
  std::size_t n = 0;
  double dsc_mean = 0.0;
  double dsc_std = 0.0;
  double tre_mean_mm = 0.0;
  double tre_std_mm = 0.0;
  double wall_time_mean_s = 0.0;
};

/// One row per method, in order of first appearance.
std::vector<MethodSummary> summarize(std::span<const MetricsRecord> records);

void write_summary_csv(std::ostream& os, std::span<const MethodSummary> rows);

/// "0.74 ± 0.06" style cell.
std::string mean_pm_std(double mean, double std, int digits);

/// Report document: the resolved config, the summary, per-method errors and
/// the name of the per-pair CSV.
std::string report_json(const RunConfig& config, std::span<const MethodSummary> summary,
                        const std::map<std::string, std::string>& errors, const std::string& records_file);

}  // namespace metareg
