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
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "metareg/config.hpp"
#include "metareg/meta.hpp"
#include "metareg/phantom.hpp"
#include "metareg/report.hpp"

namespace metareg {

/// Seed streams derived from RunConfig::seed.
enum class SeedStream : std::uint64_t { Meta = 1, Conventional = 2, Data = 3, Split = 4, NetInit = 5, Tto = 6 };

std::uint64_t stream_seed(std::uint64_t seed, SeedStream s);

struct Dataset {
  std::vector<CasePair> cases;  // index = case id
  Split split;
};

/// Case i uses seed derive_seed(stream_seed(seed, Data), i).
Dataset make_dataset(const RunConfig& config);

/// case_0000/ ... plus dataset.json with the split. Fails with "empty
/// dataset" when there are no cases.
void save_dataset(const std::filesystem::path& dir, const Dataset& d);
Dataset load_dataset(const std::filesystem::path& dir);

std::vector<ImagePair> image_pairs(const Dataset& d, std::span<const std::size_t> ids);

/// Starting network shared by conventional and meta training.
RegNet initial_network(const RunConfig& config);

struct PairScore {
  double dsc = 0.0;
  double tre_mm = 0.0;
};

/// Gland DSC of warp(moving mask) against the fixed mask, and landmark TRE.
PairScore score_pair(const CasePair& pair, const DisplacementField& ddf);

struct Evaluation {
  std::vector<MetricsRecord> records;
  std::map<std::string, std::string> errors;  // method name -> message
};

/// Runs each method on every test case. A learned method whose network is
/// null is skipped with an error entry; the other methods still run. Wall
/// time covers only the registration call.
Evaluation evaluate(const RunConfig& config, const Dataset& data, std::span<const Method> methods,
                    const RegNet* conventional, const RegNet* meta);

}  // namespace metareg
