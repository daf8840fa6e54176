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

// Short-term low-level descriptors, 34 per frame:
//
//   0  zero-crossing rate            8..20  MFCC 1-13
//   1  energy                       21..32  chroma vector (12 pitch classes, A first)
//   2  entropy of energy                33  chroma deviation
//   3  spectral centroid
//   4  spectral spread
//   5  spectral entropy
//   6  spectral flux
//   7  spectral rolloff (85%)
//
// Centroid, spread and rolloff are normalized by the Nyquist frequency.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

#include "sertl/audio.hpp"
#include "sertl/error.hpp"
#include "sertl/frame_sequence.hpp"
#include "sertl/matrix.hpp"

namespace sertl::lld {

inline constexpr double kEps = 1e-10;
inline constexpr std::size_t kNumFeatures = 34;
inline constexpr std::size_t kMfccOffset = 8;
inline constexpr std::size_t kChromaOffset = 21;

inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "zcr",         "energy",       "energy_entropy", "spectral_centroid", "spectral_spread", "spectral_entropy",
    "spectral_flux", "spectral_rolloff", "mfcc_1",   "mfcc_2",            "mfcc_3",          "mfcc_4",
    "mfcc_5",      "mfcc_6",       "mfcc_7",         "mfcc_8",            "mfcc_9",          "mfcc_10",
    "mfcc_11",     "mfcc_12",      "mfcc_13",        "chroma_1",          "chroma_2",        "chroma_3",
    "chroma_4",    "chroma_5",     "chroma_6",       "chroma_7",          "chroma_8",        "chroma_9",
    "chroma_10",   "chroma_11",    "chroma_12",      "chroma_std"};

struct Options {
  double window_ms = 50.0;
  double hop_ms = 25.0;
  std::size_t mel_filters = 26;
  std::size_t mfcc_count = 13;
  double rolloff = 0.85;
  double mel_low_hz = 0.0;
  double mel_high_hz = 8000.0;
};

inline std::size_t samples_for(double ms, std::uint32_t rate) {
  return static_cast<std::size_t>(std::llround(ms * rate / 1000.0));
}

/// Hamming-windowed frames, one per row: T = floor((N - window) / hop) + 1.
/// A trailing partial frame is dropped.
inline Matrix frame_signal(const AudioClip& clip, double window_ms, double hop_ms) {
  if (!(hop_ms > 0.0 && window_ms >= hop_ms)) {
    throw ConfigError("frame_signal: need window_ms >= hop_ms > 0, got window " + std::to_string(window_ms) +
                      " ms, hop " + std::to_string(hop_ms) + " ms");
  }
  const std::size_t window = samples_for(window_ms, clip.sample_rate);
  const std::size_t hop = samples_for(hop_ms, clip.sample_rate);
  if (clip.samples.size() < window) {
    throw DataError("frame_signal: clip has " + std::to_string(clip.samples.size()) +
                    " samples, shorter than one " + std::to_string(window) + "-sample window");
  }
  const std::size_t count = (clip.samples.size() - window) / hop + 1;
  std::vector<double> taper(window);
  for (std::size_t n = 0; n < window; ++n) {
    taper[n] = window == 1 ? 1.0
                           : 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                                    static_cast<double>(window - 1));
  }
  Matrix frames(count, window);
  for (std::size_t t = 0; t < count; ++t) {
    auto row = frames.row(t);
    for (std::size_t n = 0; n < window; ++n) {
      row[n] = clip.samples[t * hop + n] * taper[n];
    }
  }
  return frames;
}

/// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) {
      j ^= bit;
    }
    j ^= bit;
    if (i < j) {
      std::swap(a[i], a[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, ang * static_cast<double>(k));
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

/// |X[k]|^2 / window^2 for k = 0..nfft/2 of the zero-padded frame.
inline std::vector<double> power_spectrum(std::span<const double> frame, std::size_t nfft) {
  std::vector<std::complex<double>> buf(nfft);
  std::copy(frame.begin(), frame.end(), buf.begin());
  fft(buf);
  const double scale = 1.0 / static_cast<double>(frame.size());
  std::vector<double> power(nfft / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) {
    power[k] = std::norm(buf[k] * scale);
  }
  return power;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular filters on the mel scale, evaluated at the FFT bin centre
/// frequencies. Row m holds the weights of filter m over the bins.
inline Matrix mel_filterbank(std::size_t filters, std::size_t nfft, std::uint32_t rate, double low_hz, double high_hz) {
  std::vector<double> edges(filters + 2);
  const double lo = hz_to_mel(low_hz);
  const double hi = hz_to_mel(high_hz);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(filters + 1));
  }
  const std::size_t bins = nfft / 2 + 1;
  Matrix bank(filters, bins);
  for (std::size_t m = 0; m < filters; ++m) {
    const double left = edges[m];
    const double centre = edges[m + 1];
    const double right = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * rate / static_cast<double>(nfft);
      if (f > left && f <= centre) {
        bank(m, k) = (f - left) / (centre - left);
      } else if (f > centre && f < right) {
        bank(m, k) = (right - f) / (right - centre);
      }
    }
  }
  return bank;
}

/// Log mel energies (floored at 1e-10) followed by an orthonormal DCT-II.
inline std::vector<double> mfcc(std::span<const double> power, const Matrix& filterbank, std::size_t count) {
  const std::size_t filters = filterbank.rows();
  std::vector<double> log_energy(filters);
  for (std::size_t m = 0; m < filters; ++m) {
    double e = 0.0;
    auto w = filterbank.row(m);
    for (std::size_t k = 0; k < power.size(); ++k) {
      e += w[k] * power[k];
    }
    log_energy[m] = std::log(std::max(e, kEps));
  }
  std::vector<double> coeffs(count);
  const auto fm = static_cast<double>(filters);
  for (std::size_t i = 0; i < count; ++i) {
    double s = 0.0;
    for (std::size_t m = 0; m < filters; ++m) {
      s += log_energy[m] * std::cos(std::numbers::pi * static_cast<double>(i) * (static_cast<double>(m) + 0.5) / fm);
    }
    coeffs[i] = s * std::sqrt((i == 0 ? 1.0 : 2.0) / fm);
  }
  return coeffs;
}

namespace detail {

inline double block_entropy(std::span<const double> energies, double total) {
  double h = 0.0;
  for (double e : energies) {
    const double p = e / (total + kEps);
    h -= p * std::log2(p + kEps);
  }
  return h;
}

/// Normalized entropy of the energy distribution over `blocks` equal
/// sub-blocks (any remainder at the end is ignored).
inline double sub_block_entropy(std::span<const double> squares, std::size_t blocks) {
  const std::size_t len = squares.size() / blocks;
  std::vector<double> energies(blocks, 0.0);
  double total = 0.0;
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t i = 0; i < len; ++i) {
      energies[b] += squares[b * len + i];
    }
    total += energies[b];
  }
  return block_entropy(energies, total);
}

}  // namespace detail

/// Stateful per-clip extractor: holds the filterbank, chroma bin map and the
/// previous frame's spectrum for flux.
class Extractor {
 public:
  explicit Extractor(const Options& opt = {}, std::uint32_t rate = kSampleRate)
      : opt_(opt),
        rate_(rate),
        window_(samples_for(opt.window_ms, rate)),
        nfft_(std::bit_ceil(window_)),
        bank_(mel_filterbank(opt.mel_filters, nfft_, rate, opt.mel_low_hz, opt.mel_high_hz)) {
    const std::size_t bins = nfft_ / 2 + 1;
    pitch_class_.assign(bins, -1);
    std::vector<int> pitch(bins, 0);
    std::vector<std::size_t> per_pitch;
    int max_pitch = 0;
    for (std::size_t k = 1; k < bins; ++k) {
      const double f = static_cast<double>(k) * rate / static_cast<double>(nfft_);
      pitch[k] = static_cast<int>(std::lround(12.0 * std::log2(f / 27.5)));
      max_pitch = std::max(max_pitch, pitch[k]);
    }
    const int min_pitch = pitch[1];
    std::vector<std::size_t> count(static_cast<std::size_t>(max_pitch - min_pitch + 1), 0);
    for (std::size_t k = 1; k < bins; ++k) {
      ++count[static_cast<std::size_t>(pitch[k] - min_pitch)];
    }
    bin_weight_.assign(bins, 0.0);
    for (std::size_t k = 1; k < bins; ++k) {
      pitch_class_[k] = ((pitch[k] % 12) + 12) % 12;
      bin_weight_[k] = 1.0 / static_cast<double>(count[static_cast<std::size_t>(pitch[k] - min_pitch)]);
    }
  }

  std::size_t fft_size() const noexcept { return nfft_; }
  const Matrix& filterbank() const noexcept { return bank_; }

  /// Features of one windowed frame; `previous_magnitude` is empty for the
  /// first frame, which then has zero flux.
  std::array<double, kNumFeatures> frame_features(std::span<const double> frame,
                                                  std::vector<double>& previous_magnitude) const {
    std::array<double, kNumFeatures> out{};
    const auto n = static_cast<double>(frame.size());

    double crossings = 0.0;
    for (std::size_t i = 1; i < frame.size(); ++i) {
      crossings += std::abs(sign(frame[i]) - sign(frame[i - 1])) / 2.0;
    }
    out[0] = frame.size() > 1 ? crossings / (n - 1.0) : 0.0;

    std::vector<double> squares(frame.size());
    double energy = 0.0;
    for (std::size_t i = 0; i < frame.size(); ++i) {
      squares[i] = frame[i] * frame[i];
      energy += squares[i];
    }
    out[1] = energy / n;
    out[2] = detail::sub_block_entropy(squares, 10);

    const std::vector<double> power = power_spectrum(frame, nfft_);
    std::vector<double> magnitude(power.size());
    double power_sum = 0.0;
    double mag_sum = 0.0;
    for (std::size_t k = 0; k < power.size(); ++k) {
      magnitude[k] = std::sqrt(power[k]);
      power_sum += power[k];
      mag_sum += magnitude[k];
    }
    const double nyquist = rate_ / 2.0;
    double weighted = 0.0;
    for (std::size_t k = 0; k < power.size(); ++k) {
      weighted += bin_hz(k) * power[k];
    }
    const double centroid = weighted / (power_sum + kEps);
    double spread = 0.0;
    for (std::size_t k = 0; k < power.size(); ++k) {
      const double d = bin_hz(k) - centroid;
      spread += d * d * power[k];
    }
    out[3] = centroid / nyquist;
    out[4] = std::sqrt(spread / (power_sum + kEps)) / nyquist;
    out[5] = detail::sub_block_entropy(power, 10);

    if (previous_magnitude.empty()) {
      out[6] = 0.0;
    } else {
      double prev_sum = 0.0;
      for (double v : previous_magnitude) {
        prev_sum += v + kEps;
      }
      const double cur_sum = mag_sum + kEps * static_cast<double>(magnitude.size());
      double flux = 0.0;
      for (std::size_t k = 0; k < magnitude.size(); ++k) {
        const double d = magnitude[k] / cur_sum - previous_magnitude[k] / prev_sum;
        flux += d * d;
      }
      out[6] = flux;
    }
    previous_magnitude = magnitude;

    const double threshold = opt_.rolloff * power_sum;
    double cumulative = 0.0;
    std::size_t roll_bin = 0;
    for (std::size_t k = 0; k < power.size(); ++k) {
      cumulative += power[k];
      if (cumulative + kEps > threshold) {
        roll_bin = k;
        break;
      }
    }
    out[7] = bin_hz(roll_bin) / nyquist;

    const std::vector<double> cep = mfcc(power, bank_, opt_.mfcc_count);
    std::copy(cep.begin(), cep.end(), out.begin() + kMfccOffset);

    std::array<double, 12> chroma{};
    for (std::size_t k = 1; k < power.size(); ++k) {
      chroma[static_cast<std::size_t>(pitch_class_[k])] += power[k] * bin_weight_[k];
    }
    double chroma_mean = 0.0;
    for (std::size_t c = 0; c < 12; ++c) {
      chroma[c] /= power_sum + kEps;
      out[kChromaOffset + c] = chroma[c];
      chroma_mean += chroma[c];
    }
    chroma_mean /= 12.0;
    double var = 0.0;
    for (double c : chroma) {
      var += (c - chroma_mean) * (c - chroma_mean);
    }
    out[33] = std::sqrt(var / 12.0);
    return out;
  }

  FrameSequence extract(const AudioClip& clip) const {
    if (clip.sample_rate != rate_) {
      throw DataError("extract_lld: clip sampled at " + std::to_string(clip.sample_rate) + " Hz, extractor expects " +
                      std::to_string(rate_));
    }
    const Matrix frames = frame_signal(clip, opt_.window_ms, opt_.hop_ms);
    FrameSequence seq;
    seq.frames = Matrix(frames.rows(), kNumFeatures);
    seq.frame_hop_ms = opt_.hop_ms;
    seq.source_kind = SourceKind::kLld;
    std::vector<double> previous;
    for (std::size_t t = 0; t < frames.rows(); ++t) {
      const auto f = frame_features(frames.row(t), previous);
      std::copy(f.begin(), f.end(), seq.frames.row(t).begin());
    }
    return seq;
  }

 private:
  static double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
  double bin_hz(std::size_t k) const { return static_cast<double>(k) * rate_ / static_cast<double>(nfft_); }

  Options opt_;
  std::uint32_t rate_;
  std::size_t window_;
  std::size_t nfft_;
  Matrix bank_;
  std::vector<int> pitch_class_;
  std::vector<double> bin_weight_;
};

}  // namespace sertl::lld

namespace sertl {

inline FrameSequence extract_lld(const AudioClip& clip, const lld::Options& opt = {}) {
  return lld::Extractor(opt).extract(clip);
}

}  // namespace sertl
