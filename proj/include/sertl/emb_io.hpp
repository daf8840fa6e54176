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

// EMB1 container: one frame sequence per file, all integers little-endian.
//
//   offset  size  field
//        0     4  magic "EMB1"
//        4     2  version (u16) = 1
//        6     1  source kind (u8): 0 = lld, 1 = wav2vec, 2 = bert
//        7     4  rows T (u32), T >= 1
//       11     4  cols n (u32): 34 / 512 / 768 by source kind
//       15     4  frame hop in ms (IEEE f32)
//       19  4*T*n payload, f32 row-major
//   19+4Tn     4  CRC-32 (IEEE, as in zlib) of the payload bytes

#pragma once

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "sertl/error.hpp"
#include "sertl/frame_sequence.hpp"

namespace sertl::emb {

inline constexpr char kMagic[4] = {'E', 'M', 'B', '1'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 19;
inline constexpr std::size_t kTrailerSize = 4;

struct Header {
  std::uint16_t version = kVersion;
  SourceKind source_kind = SourceKind::kLld;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  float frame_hop_ms = 0.0f;
};

inline std::size_t file_size(std::uint32_t rows, std::uint32_t cols) {
  return kHeaderSize + std::size_t{4} * rows * cols + kTrailerSize;
}

inline std::uint32_t crc32_of(const unsigned char* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, std::numeric_limits<uInt>::max()));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace detail {

inline void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline Header parse_header(const unsigned char* p, const std::string& where) {
  if (std::memcmp(p, kMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic, where + ": not an EMB1 file (bad magic)");
  }
  Header h;
  h.version = static_cast<std::uint16_t>(p[4] | (p[5] << 8));
  if (h.version != kVersion) {
    throw FormatError(FormatError::Kind::kBadVersion, where + ": unsupported EMB1 version " + std::to_string(h.version));
  }
  if (p[6] > 2) {
    throw FormatError(FormatError::Kind::kBadHeader, where + ": unknown source kind code " + std::to_string(p[6]));
  }
  h.source_kind = static_cast<SourceKind>(p[6]);
  h.rows = get_u32(p + 7);
  h.cols = get_u32(p + 11);
  h.frame_hop_ms = std::bit_cast<float>(get_u32(p + 15));
  if (h.rows == 0) {
    throw FormatError(FormatError::Kind::kBadHeader, where + ": declares an empty sequence");
  }
  if (h.cols != feature_dim(h.source_kind)) {
    throw FormatError(FormatError::Kind::kDimensionMismatch,
                      where + ": " + std::string(to_string(h.source_kind)) + " container must have " +
                          std::to_string(feature_dim(h.source_kind)) + " columns, found " + std::to_string(h.cols));
  }
  return h;
}

inline std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

/// Serializes a sequence to EMB1 bytes. Values are rounded to f32.
inline std::vector<unsigned char> encode(const FrameSequence& seq) {
  validate(seq);
  std::vector<unsigned char> out;
  out.reserve(file_size(static_cast<std::uint32_t>(seq.length()), static_cast<std::uint32_t>(seq.dim())));
  out.insert(out.end(), kMagic, kMagic + 4);
  detail::put_u16(out, kVersion);
  out.push_back(static_cast<unsigned char>(seq.source_kind));
  detail::put_u32(out, static_cast<std::uint32_t>(seq.length()));
  detail::put_u32(out, static_cast<std::uint32_t>(seq.dim()));
  detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(seq.frame_hop_ms)));
  for (double v : seq.frames.values()) {
    const auto f = static_cast<float>(v);
    if (!std::isfinite(f)) {
      throw NumericError("EMB1 encode: value " + std::to_string(v) + " does not fit in f32");
    }
    detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  detail::put_u32(out, crc32_of(out.data() + kHeaderSize, out.size() - kHeaderSize));
  return out;
}

/// Parses and validates EMB1 bytes; never returns partial data.
inline FrameSequence decode(const std::vector<unsigned char>& bytes, const std::string& where = "EMB1 data") {
  if (bytes.size() < kHeaderSize) {
    throw FormatError(FormatError::Kind::kLengthMismatch,
                      where + ": " + std::to_string(bytes.size()) + " bytes is shorter than the EMB1 header");
  }
  const Header h = detail::parse_header(bytes.data(), where);
  const std::size_t expected = file_size(h.rows, h.cols);
  if (bytes.size() != expected) {
    throw FormatError(FormatError::Kind::kLengthMismatch, where + ": expected " + std::to_string(expected) +
                                                              " bytes for " + std::to_string(h.rows) + "x" +
                                                              std::to_string(h.cols) + ", found " +
                                                              std::to_string(bytes.size()));
  }
  const std::size_t payload = expected - kHeaderSize - kTrailerSize;
  const std::uint32_t stored = detail::get_u32(bytes.data() + kHeaderSize + payload);
  if (crc32_of(bytes.data() + kHeaderSize, payload) != stored) {
    throw FormatError(FormatError::Kind::kCrcMismatch, where + ": payload CRC mismatch");
  }
  FrameSequence seq;
  seq.source_kind = h.source_kind;
  seq.frame_hop_ms = static_cast<double>(h.frame_hop_ms);
  seq.frames = Matrix(h.rows, h.cols);
  const unsigned char* p = bytes.data() + kHeaderSize;
  for (double& v : seq.frames.values()) {
    v = static_cast<double>(std::bit_cast<float>(detail::get_u32(p)));
    p += 4;
  }
  if (!seq.frames.all_finite()) {
    throw NumericError(where + ": payload contains non-finite values");
  }
  return seq;
}

inline void write_container(const FrameSequence& seq, const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = encode(seq);
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out || !out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
      throw IoError("cannot write " + path.string());
    }
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw IoError("cannot write " + path.string() + ": " + ec.message());
  }
}

inline FrameSequence read_container(const std::filesystem::path& path) {
  return decode(detail::slurp(path), path.string());
}

/// Header fields plus whether the payload checks out.
struct Inspection {
  Header header;
  std::size_t file_bytes = 0;
  bool length_ok = false;
  bool crc_ok = false;
};

inline Inspection inspect(const std::filesystem::path& path) {
  const auto bytes = detail::slurp(path);
  if (bytes.size() < kHeaderSize) {
    throw FormatError(FormatError::Kind::kLengthMismatch, path.string() + ": shorter than the EMB1 header");
  }
  Inspection out;
  out.header = detail::parse_header(bytes.data(), path.string());
  out.file_bytes = bytes.size();
  out.length_ok = bytes.size() == file_size(out.header.rows, out.header.cols);
  if (out.length_ok) {
    const std::size_t payload = bytes.size() - kHeaderSize - kTrailerSize;
    out.crc_ok = crc32_of(bytes.data() + kHeaderSize, payload) == detail::get_u32(bytes.data() + kHeaderSize + payload);
  }
  return out;
}

/// <root>/<kind>/<id>.emb1
inline std::filesystem::path container_path(const std::filesystem::path& root, SourceKind kind, const std::string& id) {
  return root / std::string(to_string(kind)) / (id + ".emb1");
}

}  // namespace sertl::emb
