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

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "sertl/dataset.hpp"
#include "sertl/error.hpp"

namespace sertl {

/// counts[true][predicted].
struct Confusion {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

  void add(int truth, int predicted) {
    if (truth < 0 || truth >= static_cast<int>(kNumClasses) || predicted < 0 ||
        predicted >= static_cast<int>(kNumClasses)) {
      throw DataError("confusion: class index out of range (" + std::to_string(truth) + ", " +
                      std::to_string(predicted) + ")");
    }
    ++counts[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
  }

  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (const auto& row : counts) {
      for (auto c : row) {
        n += c;
      }
    }
    return n;
  }

  std::uint64_t support(std::size_t cls) const {
    std::uint64_t n = 0;
    for (auto c : counts[cls]) {
      n += c;
    }
    return n;
  }

  bool operator==(const Confusion&) const = default;
};

inline Confusion confusion_of(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) {
    throw DimensionError("confusion: " + std::to_string(truth.size()) + " labels vs " +
                         std::to_string(predicted.size()) + " predictions");
  }
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    c.add(truth[i], predicted[i]);
  }
  return c;
}

/// Mean per-class recall over the classes that occur in the test set.
/// Zero for an empty matrix.
inline double unweighted_accuracy(const Confusion& c) {
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    const std::uint64_t n = c.support(k);
    if (n > 0) {
      sum += static_cast<double>(c.counts[k][k]) / static_cast<double>(n);
      ++present;
    }
  }
  return present == 0 ? 0.0 : sum / static_cast<double>(present);
}

/// Overall accuracy. Zero for an empty matrix.
inline double weighted_accuracy(const Confusion& c) {
  const std::uint64_t n = c.total();
  if (n == 0) {
    return 0.0;
  }
  std::uint64_t hit = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    hit += c.counts[k][k];
  }
  return static_cast<double>(hit) / static_cast<double>(n);
}

}  // namespace sertl
