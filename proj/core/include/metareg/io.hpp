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

#include <filesystem>
#include <string>

#include "metareg/image.hpp"
#include "metareg/metrics.hpp"
#include "metareg/models.hpp"
#include "metareg/param_vector.hpp"
#include "metareg/phantom.hpp"

namespace metareg {

class IoError : public Error {
 public:
  enum class Kind { Missing, BadHeader, UnknownDtype, SizeMismatch, Truncated, Write };

  IoError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

const char* to_string(IoError::Kind kind);

/// Volumes and fields are stored as `<stem>.hdr` (key = value text) plus
/// `<stem>.raw` (little-endian f32, x fastest, channel-major). `stem` is a
/// path without extension.
void save_volume(const std::filesystem::path& stem, const Volume& v);
Volume load_volume(const std::filesystem::path& stem);

void save_ddf(const std::filesystem::path& stem, const DisplacementField& f);
DisplacementField load_ddf(const std::filesystem::path& stem);

/// One landmark per line: name x_mm y_mm z_mm radius_mm.
void save_landmarks(const std::filesystem::path& file, const LandmarkSet& set);
LandmarkSet load_landmarks(const std::filesystem::path& file);

/// Raw little-endian f32 blob of the values, no header.
void save_param_blob(const std::filesystem::path& file, const ParamVector& p);
ParamVector load_param_blob(const std::filesystem::path& file, std::shared_ptr<const Layout> layout);

/// `<stem>.manifest` (architecture config, parameter count, layout table)
/// and `<stem>.params` (blob).
void save_checkpoint(const std::filesystem::path& stem, const RegNet& net);
RegNet load_checkpoint(const std::filesystem::path& stem);

/// Case directory with moving/fixed images, masks, landmarks and the
/// ground-truth field.
void save_case_pair(const std::filesystem::path& dir, const CasePair& pair);
CasePair load_case_pair(const std::filesystem::path& dir);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s);

}  // namespace metareg
