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

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "sertl/error.hpp"
#include "sertl/matrix.hpp"

namespace sertl {

/// Where a frame sequence came from. Values are the EMB1 on-disk codes.
enum class SourceKind : std::uint8_t { kLld = 0, kWav2vec = 1, kBert = 2 };

inline constexpr std::size_t kLldDim = 34;
inline constexpr std::size_t kWav2vecDim = 512;
inline constexpr std::size_t kBertDim = 768;

constexpr std::size_t feature_dim(SourceKind kind) {
  switch (kind) {
    case SourceKind::kLld:
      return kLldDim;
    case SourceKind::kWav2vec:
      return kWav2vecDim;
    case SourceKind::kBert:
      return kBertDim;
  }
  return 0;
}

inline std::string_view to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::kLld:
      return "lld";
    case SourceKind::kWav2vec:
      return "wav2vec";
    case SourceKind::kBert:
      return "bert";
  }
  return "unknown";
}

inline SourceKind parse_source_kind(std::string_view name) {
  if (name == "lld") {
    return SourceKind::kLld;
  }
  if (name == "wav2vec") {
    return SourceKind::kWav2vec;
  }
  if (name == "bert") {
    return SourceKind::kBert;
  }
  throw ConfigError("unknown feature source '" + std::string(name) + "' (expected lld, wav2vec or bert)");
}

/// T x n time-major matrix of per-frame features. BERT sequences are
/// token-indexed and carry frame_hop_ms = 0.
struct FrameSequence {
  Matrix frames;
  double frame_hop_ms = 0.0;
  SourceKind source_kind = SourceKind::kLld;

  std::size_t length() const noexcept { return frames.rows(); }
  std::size_t dim() const noexcept { return frames.cols(); }
};

/// Checks T >= 1, finiteness and the dimension implied by source_kind.
inline void validate(const FrameSequence& seq) {
  if (seq.length() == 0) {
    throw DataError("frame sequence is empty");
  }
  if (seq.dim() != feature_dim(seq.source_kind)) {
    throw DimensionError(std::string(to_string(seq.source_kind)) + " sequence must have " +
                         std::to_string(feature_dim(seq.source_kind)) + " features, got " +
                         std::to_string(seq.dim()));
  }
  if (!seq.frames.all_finite()) {
    throw NumericError("frame sequence contains non-finite values");
  }
}

}  // namespace sertl
