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

#include <functional>
#include <string_view>
#include <utility>
#include <vector>

#include "metareg/error.hpp"
#include "metareg/tensor.hpp"

namespace metareg {

enum class OpKind {
  Constant,
  Variable,
  Parameter,
  Conv3d,
  LeakyRelu,
  Upsample2,
  Concat,
  Sample,
  Warp,
  Ssd,
  BendingEnergy,
  Add,
  Scale,
  Mean,
  Reshape,
};

std::string_view to_string(OpKind kind);

/// Handle to a node on a tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode record of one forward pass. Nodes are appended in execution
/// order, so every input id is smaller than the id of the node using it.
/// A tape supports a single backward sweep; record a new tape for the next
/// forward pass.
template <typename T>
class BasicTape {
 public:
  using TensorT = BasicTensor<T>;
  using BackwardFn = std::function<void(BasicTape&, int)>;

  struct Node {
    OpKind kind = OpKind::Constant;
    std::vector<int> inputs;
    TensorT value;
    TensorT grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  Var constant(TensorT value) { return push(OpKind::Constant, {}, std::move(value), false, {}); }

  /// Leaf that receives a gradient but is not bound to a parameter segment.
  Var variable(TensorT value) { return push(OpKind::Variable, {}, std::move(value), true, {}); }

  /// Leaf bound to segment `segment` of a ParamVector layout.
  Var parameter(TensorT value, int segment) {
    Var v = push(OpKind::Parameter, {}, std::move(value), true, {});
    params_.emplace_back(segment, v.id);
    return v;
  }

  /// Appends an operation node. The backward function is kept only if some
  /// input requires a gradient.
  Var record(OpKind kind, std::vector<int> inputs, TensorT value, BackwardFn backward) {
    if (consumed_) throw TapeError("cannot record on a tape after backward()");
    bool needs = false;
    for (int in : inputs) {
      if (in < 0 || in >= static_cast<int>(nodes_.size())) throw TapeError("node input refers to an unknown node");
      needs = needs || nodes_[static_cast<std::size_t>(in)].requires_grad;
    }
    return push(kind, std::move(inputs), std::move(value), needs, needs ? std::move(backward) : BackwardFn{});
  }

  const TensorT& value(Var v) const { return node(v.id).value; }
  const TensorT& value(int id) const { return node(id).value; }
  bool requires_grad(Var v) const { return node(v.id).requires_grad; }
  bool requires_grad(int id) const { return node(id).requires_grad; }
  OpKind kind(Var v) const { return node(v.id).kind; }
  const std::vector<int>& inputs(Var v) const { return node(v.id).inputs; }

  bool has_grad(Var v) const { return node(v.id).has_grad; }

  const TensorT& grad(Var v) const {
    const Node& n = node(v.id);
    if (!n.has_grad) throw TapeError("node has no gradient");
    return n.grad;
  }

  /// Gradient accumulator of node `id`, zero-allocated on first use.
  TensorT& grad_buffer(int id) {
    Node& n = node(id);
    if (!n.has_grad) {
      n.grad = TensorT(n.value.dims(), T{0});
      n.has_grad = true;
    }
    return n.grad;
  }

  void backward(Var loss) {
    if (consumed_) throw TapeError("backward() already ran on this tape; record a new forward pass");
    const Node& ln = node(loss.id);
    if (ln.value.size() != 1) throw TapeError("backward() needs a scalar loss node");
    consumed_ = true;
    grad_buffer(loss.id).fill(T{1});
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.has_grad || !n.backward) continue;
      n.backward(*this, id);
    }
    for (const auto& [segment, id] : params_) grad_buffer(id);
  }

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  /// (segment index, node id) of every parameter leaf, in creation order.
  const std::vector<std::pair<int, int>>& parameters() const { return params_; }

 private:
  Node& node(int id) {
    if (id < 0 || id >= static_cast<int>(nodes_.size())) throw TapeError("invalid tape node id");
    return nodes_[static_cast<std::size_t>(id)];
  }
  const Node& node(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size())) throw TapeError("invalid tape node id");
    return nodes_[static_cast<std::size_t>(id)];
  }

  Var push(OpKind kind, std::vector<int> inputs, TensorT value, bool requires_grad, BackwardFn fn) {
    if (consumed_) throw TapeError("cannot record on a tape after backward()");
    Node n;
    n.kind = kind;
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<int, int>> params_;
  bool consumed_ = false;
};

using Tape = BasicTape<float>;
using Tape64 = BasicTape<double>;

}  // namespace metareg
