// Copyright 2026 The sertl Authors.
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
#include <functional>
#include <initializer_list>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "sertl/error.hpp"
#include "sertl/matrix.hpp"
#include "sertl/param_store.hpp"

namespace sertl {

/// Handle to a value recorded on a Tape.
struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const noexcept { return id != std::numeric_limits<std::uint32_t>::max(); }
};

/// Reverse-mode autodiff record. Every op appends one node holding its
/// output value and a closure that pushes the output gradient into its
/// inputs. A tape supports exactly one backward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var)>;

  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }

  /// Leaf bound to a parameter slot; its gradient is added to the slot's
  /// grad at the end of backward().
  Var param(ParamStore& store, std::string_view name) {
    const std::size_t index = store.index_of(name);
    Var v = push(store.slots()[index].value, true, nullptr);
    nodes_.back().store = &store;
    nodes_.back().slot = index;
    return v;
  }

  /// Appends an op result. The node requires a gradient iff any input does;
  /// otherwise the closure is dropped.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
    bool needs = false;
    for (Var in : inputs) {
      needs = needs || node(in).requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(fn) : nullptr);
  }

  Var record(Matrix value, const std::vector<Var>& inputs, BackwardFn fn) {
    bool needs = false;
    for (Var in : inputs) {
      needs = needs || node(in).requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(fn) : nullptr);
  }

  const Matrix& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  /// Gradient buffer of v, allocated as zeros on first access.
  Matrix& grad(Var v) {
    Node& n = node(v);
    if (n.grad.empty() && !n.value.empty()) {
      n.grad = Matrix::zeros_like(n.value);
    }
    return n.grad;
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  bool backward_done() const noexcept { return backward_done_; }

  void backward(Var loss) {
    if (nodes_.empty()) {
      throw StateError("backward: nothing recorded on the tape");
    }
    if (backward_done_) {
      throw StateError("backward: already run on this tape; record a new forward pass first");
    }
    const Node& l = node(loss);
    if (l.value.rows() != 1 || l.value.cols() != 1) {
      throw StateError("backward: loss must be 1x1, got " + l.value.shape_string());
    }
    backward_done_ = true;
    grad(loss)(0, 0) = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.fn && !n.grad.empty()) {
        n.fn(*this, Var{static_cast<std::uint32_t>(i)});
      }
    }
    for (auto& n : nodes_) {
      if (n.store != nullptr) {
        ParamSlot& s = n.store->slots()[n.slot];
        if (!n.grad.empty()) {
          s.grad += n.grad;
        }
      }
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn fn;
    ParamStore* store = nullptr;
    std::size_t slot = 0;
  };

  Var push(Matrix value, bool requires_grad, BackwardFn fn) {
    if (backward_done_) {
      throw StateError("tape: cannot record after backward");
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.fn = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  Node& node(Var v) {
    if (!v.valid() || v.id >= nodes_.size()) {
      throw StateError("tape: invalid variable handle");
    }
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) {
      throw StateError("tape: invalid variable handle");
    }
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace sertl
