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

#include "metareg/param_vector.hpp"

namespace metareg {

void Layout::add(std::string name, std::vector<int> dims) {
  for (const auto& s : segments_)
    if (s.name == name) throw ShapeError("duplicate parameter segment '" + name + "'");
  Segment s{std::move(name), total_, std::move(dims)};
  total_ += s.size();
  segments_.push_back(std::move(s));
}

std::size_t Layout::find(const std::string& name) const {
  for (std::size_t i = 0; i < segments_.size(); ++i)
    if (segments_[i].name == name) return i;
  throw ShapeError("no parameter segment named '" + name + "'");
}

}  // namespace metareg
