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

// Brute-force UA/WA: expands a confusion matrix into one (truth, prediction)
// pair per utterance and counts hits per class.

#pragma once

#include <utility>
#include <vector>

#include "sertl/metrics.hpp"
#include "sertl/rng.hpp"

namespace sertl::testing {

inline std::vector<std::pair<int, int>> expand(const Confusion& c) {
  std::vector<std::pair<int, int>> out;
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      for (std::uint64_t n = 0; n < c.counts[a][b]; ++n) {
        out.emplace_back(a, b);
      }
    }
  }
  return out;
}

inline double oracle_ua(const Confusion& c) {
  const auto pairs = expand(c);
  double total = 0.0;
  int classes = 0;
  for (int k = 0; k < 4; ++k) {
    std::uint64_t seen = 0;
    std::uint64_t hit = 0;
    for (const auto& [t, p] : pairs) {
      if (t == k) {
        ++seen;
        hit += p == k ? 1 : 0;
      }
    }
    if (seen > 0) {
      total += static_cast<double>(hit) / static_cast<double>(seen);
      ++classes;
    }
  }
  return classes == 0 ? 0.0 : total / classes;
}

inline double oracle_wa(const Confusion& c) {
  const auto pairs = expand(c);
  std::uint64_t hit = 0;
  for (const auto& [t, p] : pairs) {
    hit += t == p ? 1 : 0;
  }
  return pairs.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(pairs.size());
}

/// Random counts in [0, 30], with whole rows occasionally zeroed.
inline Confusion random_confusion(Rng& rng) {
  Confusion c;
  for (auto& row : c.counts) {
    const bool empty = rng.below(8) == 0;
    for (auto& v : row) {
      v = empty ? 0 : rng.below(31);
    }
  }
  return c;
}

}  // namespace sertl::testing
