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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "metareg/error.hpp"
#include "metareg/tape.hpp"
#include "metareg/tensor.hpp"

namespace metareg {

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::vector<int> dims;

  std::size_t size() const {
    std::size_t n = 1;
    for (int d : dims) n *= static_cast<std::size_t>(d);
    return n;
  }
  bool operator==(const Segment&) const = default;
};

/// Named segments of a flat parameter list, in storage order.
class Layout {
 public:
  Layout() = default;

  /// Appends a segment directly after the previous one.
  void add(std::string name, std::vector<int> dims);

  const std::vector<Segment>& segments() const { return segments_; }
  const Segment& segment(std::size_t i) const { return segments_.at(i); }
  std::size_t find(const std::string& name) const;
  std::size_t total() const { return total_; }

  bool operator==(const Layout& o) const { return segments_ == o.segments_; }

 private:
  std::vector<Segment> segments_;
  std::size_t total_ = 0;
};

/// Flat view of all trainable parameters of a model.
template <typename T>
class BasicParamVector {
 public:
  BasicParamVector() : layout_(std::make_shared<Layout>()) {}

  explicit BasicParamVector(std::shared_ptr<const Layout> layout, T fill = T{0})
      : layout_(std::move(layout)), values_(layout_->total(), fill) {}

  BasicParamVector(std::shared_ptr<const Layout> layout, std::vector<T> values)
      : layout_(std::move(layout)), values_(std::move(values)) {
    if (values_.size() != layout_->total())
      throw ShapeError("parameter count " + std::to_string(values_.size()) + " does not match layout total " +
                       std::to_string(layout_->total()));
  }

  const Layout& layout() const { return *layout_; }
  const std::shared_ptr<const Layout>& layout_ptr() const { return layout_; }
  std::size_t size() const { return values_.size(); }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  std::span<T> segment(std::size_t i) {
    const Segment& s = layout_->segment(i);
    return std::span<T>(values_).subspan(s.offset, s.size());
  }
  std::span<const T> segment(std::size_t i) const {
    const Segment& s = layout_->segment(i);
    return std::span<const T>(values_).subspan(s.offset, s.size());
  }

  /// Copy of one segment shaped by its dims.
  BasicTensor<T> tensor(std::size_t i) const {
    const Segment& s = layout_->segment(i);
    auto v = segment(i);
    return BasicTensor<T>(s.dims, std::vector<T>(v.begin(), v.end()));
  }

  /// One tensor per segment.
  std::vector<BasicTensor<T>> unflatten() const {
    std::vector<BasicTensor<T>> out;
    for (std::size_t i = 0; i < layout_->segments().size(); ++i) out.push_back(tensor(i));
    return out;
  }

  /// Inverse of unflatten().
  static BasicParamVector flatten(std::shared_ptr<const Layout> layout, const std::vector<BasicTensor<T>>& parts) {
    if (parts.size() != layout->segments().size()) throw ShapeError("flatten: segment count mismatch");
    BasicParamVector pv(layout);
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (parts[i].dims() != layout->segment(i).dims)
        throw ShapeError("flatten: segment '" + layout->segment(i).name + "' has dims " +
                         dims_to_string(parts[i].dims()));
      std::copy(parts[i].storage().begin(), parts[i].storage().end(), pv.segment(i).begin());
    }
    return pv;
  }

  bool same_layout(const BasicParamVector& o) const { return layout_ == o.layout_ || *layout_ == *o.layout_; }

  template <typename U>
  BasicParamVector<U> cast() const {
    std::vector<U> v(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) v[i] = static_cast<U>(values_[i]);
    return BasicParamVector<U>(layout_, std::move(v));
  }

  bool all_finite() const {
    for (T v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  /// Bitwise-equal values on an equal layout.
  bool operator==(const BasicParamVector& o) const { return same_layout(o) && values_ == o.values_; }

 private:
  std::shared_ptr<const Layout> layout_;
  std::vector<T> values_;
};

using ParamVector = BasicParamVector<float>;
using ParamVector64 = BasicParamVector<double>;

template <typename T>
void require_same_layout(const BasicParamVector<T>& a, const BasicParamVector<T>& b, const char* what) {
  if (!a.same_layout(b)) throw ShapeError(std::string(what) + ": parameter layouts differ");
}

/// Records one parameter leaf per segment; returns the Vars in segment order.
template <typename T>
std::vector<Var> bind_parameters(BasicTape<T>& tape, const BasicParamVector<T>& params) {
  std::vector<Var> vars;
  vars.reserve(params.layout().segments().size());
  for (std::size_t i = 0; i < params.layout().segments().size(); ++i)
    vars.push_back(tape.parameter(params.tensor(i), static_cast<int>(i)));
  return vars;
}

/// Gradients of every parameter leaf on a tape after backward(), laid out
/// like `layout`. Segments without a leaf get zeros.
template <typename T>
BasicParamVector<T> gather_gradients(const BasicTape<T>& tape, std::shared_ptr<const Layout> layout) {
  BasicParamVector<T> g(std::move(layout));
  for (const auto& [segment, id] : tape.parameters()) {
    const Var v{id};
    if (!tape.has_grad(v)) continue;
    const auto& gv = tape.grad(v);
    auto dst = g.segment(static_cast<std::size_t>(segment));
    if (gv.size() != dst.size()) throw ShapeError("gradient size does not match segment");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gv[i];
  }
  return g;
}

}  // namespace metareg
