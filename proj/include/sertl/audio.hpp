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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "sertl/error.hpp"

namespace sertl {

inline constexpr std::uint32_t kSampleRate = 16000;

/// Mono audio in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  std::uint32_t sample_rate = kSampleRate;
};

namespace detail {

inline std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
inline std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

/// Reads a RIFF/WAVE file holding 16-bit PCM or 32-bit float samples.
/// Channels are averaged to mono. Files not sampled at 16 kHz are rejected
/// rather than resampled.
inline AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open audio file " + path.string());
  }
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto bad = [&](const std::string& why) { return DataError("invalid WAV file " + path.string() + ": " + why); };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw bad("missing RIFF/WAVE header");
  }

  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = detail::le32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) {
        throw bad("short fmt chunk");
      }
      format = detail::le16(chunk + 8);
      channels = detail::le16(chunk + 10);
      rate = detail::le32(chunk + 12);
      bits = detail::le16(chunk + 22);
      if (format == 0xFFFE && avail >= 26) {
        format = detail::le16(chunk + 32);  // WAVE_FORMAT_EXTENSIBLE sub-format GUID prefix
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = avail;
    }
    pos = body + size + (size & 1u);
  }
  if (channels == 0 || data == nullptr) {
    throw bad("missing fmt or data chunk");
  }
  if (rate != kSampleRate) {
    throw DataError("audio file " + path.string() + " is sampled at " + std::to_string(rate) +
                    " Hz; only 16000 Hz is supported");
  }
  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32) {
    throw bad("unsupported sample format " + std::to_string(format) + "/" + std::to_string(bits) + " bit");
  }

  const std::size_t width = bits / 8;
  const std::size_t frames = data_size / (width * channels);
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const unsigned char* p = data + (i * channels + ch) * width;
      if (pcm16) {
        acc += static_cast<std::int16_t>(detail::le16(p)) / 32768.0;
      } else {
        const std::uint32_t raw = detail::le32(p);
        float f = 0.0f;
        std::memcpy(&f, &raw, sizeof f);
        acc += static_cast<double>(f);
      }
    }
    clip.samples[i] = acc / static_cast<double>(channels);
  }
  return clip;
}

/// Writes mono 16-bit PCM; samples are clipped to [-1, 1].
inline void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  std::vector<unsigned char> out;
  auto put16 = [&](std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xFF));
    out.push_back(static_cast<unsigned char>(v >> 8));
  };
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
    }
  };
  auto tag = [&](const char* s) { out.insert(out.end(), s, s + 4); };
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  tag("RIFF");
  put32(36 + data_bytes);
  tag("WAVE");
  tag("fmt ");
  put32(16);
  put16(1);
  put16(1);
  put32(clip.sample_rate);
  put32(clip.sample_rate * 2);
  put16(2);
  put16(16);
  tag("data");
  put32(data_bytes);
  for (double s : clip.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()))) {
    throw IoError("cannot write audio file " + path.string());
  }
}

}  // namespace sertl
