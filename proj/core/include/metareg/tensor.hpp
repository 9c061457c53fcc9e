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

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "metareg/error.hpp"

namespace metareg {

/// Spatial extent of a volumetric grid, in voxels.
struct Extent {
  int x = 0;
  int y = 0;
  int z = 0;

  std::size_t voxels() const {
    return static_cast<std::size_t>(x) * static_cast<std::size_t>(y) * static_cast<std::size_t>(z);
  }
  bool operator==(const Extent&) const = default;
};

std::string to_string(const Extent& e);

/// Dense tensor with up to five axes. The trailing three axes are spatial
/// (X, Y, Z) and stored x-fastest: within one channel the linear index is
/// x + X*(y + Y*z). Leading axes (batch, channel) are outer, first axis
/// slowest.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(std::vector<int> dims, T fill = T{0}) : dims_(std::move(dims)) {
    validate_dims(dims_);
    data_.assign(count(dims_), fill);
  }

  BasicTensor(std::vector<int> dims, std::vector<T> values)
      : dims_(std::move(dims)), data_(std::move(values)) {
    validate_dims(dims_);
    if (data_.size() != count(dims_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match dims product " + std::to_string(count(dims_)));
    }
  }

  static BasicTensor scalar(T v) { return BasicTensor(std::vector<int>{}, std::vector<T>{v}); }

  /// [X,Y,Z] single-channel grid.
  static BasicTensor volume(Extent e, T fill = T{0}) { return BasicTensor({e.x, e.y, e.z}, fill); }

  /// [C,X,Y,Z] multi-channel grid.
  static BasicTensor channels(int c, Extent e, T fill = T{0}) {
    return BasicTensor({c, e.x, e.y, e.z}, fill);
  }

  const std::vector<int>& dims() const { return dims_; }
  int rank() const { return static_cast<int>(dims_.size()); }
  int dim(int axis) const { return dims_.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Spatial extent; requires rank >= 3.
  Extent extent() const {
    if (rank() < 3) throw ShapeError("tensor of rank " + std::to_string(rank()) + " has no spatial extent");
    const auto r = dims_.size();
    return Extent{dims_[r - 3], dims_[r - 2], dims_[r - 1]};
  }

  /// Product of the non-spatial axes (1 for a bare [X,Y,Z] grid).
  int channels() const {
    if (rank() < 3) throw ShapeError("tensor of rank " + std::to_string(rank()) + " has no channel axis");
    int c = 1;
    for (std::size_t i = 0; i + 3 < dims_.size(); ++i) c *= dims_[i];
    return c;
  }

  std::size_t index(int c, int x, int y, int z) const {
    const auto r = dims_.size();
    const std::size_t nx = static_cast<std::size_t>(dims_[r - 3]);
    const std::size_t ny = static_cast<std::size_t>(dims_[r - 2]);
    const std::size_t nz = static_cast<std::size_t>(dims_[r - 1]);
    return static_cast<std::size_t>(x) +
           nx * (static_cast<std::size_t>(y) + ny * (static_cast<std::size_t>(z) + nz * static_cast<std::size_t>(c)));
  }

  T& at(int x, int y, int z) { return data_[index(0, x, y, z)]; }
  const T& at(int x, int y, int z) const { return data_[index(0, x, y, z)]; }
  T& at(int c, int x, int y, int z) { return data_[index(c, x, y, z)]; }
  const T& at(int c, int x, int y, int z) const { return data_[index(c, x, y, z)]; }

  /// Value of a one-element tensor.
  T item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor with " + std::to_string(data_.size()) + " elements");
    return data_[0];
  }

  std::span<T> channel(int c) {
    const std::size_t n = extent().voxels();
    return std::span<T>(data_).subspan(static_cast<std::size_t>(c) * n, n);
  }
  std::span<const T> channel(int c) const {
    const std::size_t n = extent().voxels();
    return std::span<const T>(data_).subspan(static_cast<std::size_t>(c) * n, n);
  }

  bool same_shape(const BasicTensor& o) const { return dims_ == o.dims_; }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return BasicTensor<U>(dims_, std::move(out));
  }

  bool operator==(const BasicTensor&) const = default;

 private:
  static std::size_t count(const std::vector<int>& dims) {
    std::size_t n = 1;
    for (int d : dims) n *= static_cast<std::size_t>(d);
    return n;
  }
  static void validate_dims(const std::vector<int>& dims) {
    if (dims.size() > 5) throw ShapeError("tensor rank above 5");
    for (int d : dims)
      if (d <= 0) throw ShapeError("tensor dims must be positive");
  }

  std::vector<int> dims_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

std::string dims_to_string(const std::vector<int>& dims);

}  // namespace metareg
