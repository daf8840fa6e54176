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

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sertl/error.hpp"
#include "sertl/matrix.hpp"
#include "sertl/rng.hpp"

namespace sertl {

struct ParamSlot {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;
};

/// Named trainable parameters with gradient and Adam moment buffers.
/// Slots keep insertion order, which fixes iteration order everywhere
/// (initialization, optimizer, checkpoints).
class ParamStore {
 public:
  ParamSlot& add(std::string name, Matrix value) {
    if (index_.contains(name)) {
      throw ConfigError("duplicate parameter slot '" + name + "'");
    }
    index_.emplace(name, slots_.size());
    ParamSlot slot;
    slot.name = std::move(name);
    slot.grad = Matrix::zeros_like(value);
    slot.adam_m = Matrix::zeros_like(value);
    slot.adam_v = Matrix::zeros_like(value);
    slot.value = std::move(value);
    slots_.push_back(std::move(slot));
    return slots_.back();
  }

  bool contains(std::string_view name) const { return index_.find(std::string(name)) != index_.end(); }

  ParamSlot& slot(std::string_view name) { return slots_[index_of(name)]; }
  const ParamSlot& slot(std::string_view name) const { return slots_[index_of(name)]; }

  std::size_t index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) {
      throw ConfigError("unknown parameter slot '" + std::string(name) + "'");
    }
    return it->second;
  }

  std::vector<ParamSlot>& slots() noexcept { return slots_; }
  const std::vector<ParamSlot>& slots() const noexcept { return slots_; }

  std::uint64_t step_count() const noexcept { return step_count_; }
  void set_step_count(std::uint64_t n) noexcept { step_count_ = n; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& s : slots_) {
      n += s.value.size();
    }
    return n;
  }

  void zero_grad() {
    for (auto& s : slots_) {
      s.grad.fill(0.0);
    }
  }

  double grad_norm() const {
    double sq = 0.0;
    for (const auto& s : slots_) {
      for (double g : s.grad.values()) {
        sq += g * g;
      }
    }
    return std::sqrt(sq);
  }

  /// Rescales all gradients so their global L2 norm is at most max_norm.
  /// Returns the norm before clipping.
  double clip_grad_norm(double max_norm) {
    const double norm = grad_norm();
    if (norm > max_norm && norm > 0.0) {
      const double scale = max_norm / norm;
      for (auto& s : slots_) {
        for (double& g : s.grad.values()) {
          g *= scale;
        }
      }
    }
    return norm;
  }

 private:
  std::vector<ParamSlot> slots_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::uint64_t step_count_ = 0;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)), fan_in = rows, fan_out = cols.
inline Matrix glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& v : m.values()) {
    v = rng.uniform(-limit, limit);
  }
  return m;
}

}  // namespace sertl
