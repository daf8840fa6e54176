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

// Brute-force MFCC reference: O(N^2) DFT, filter weights computed per bin
// from the triangle formula, plain DCT-II. Shares no code with lld.hpp.

#pragma once

#include <cmath>
#include <numbers>
#include <vector>

namespace sertl::testing {

inline std::vector<double> oracle_mfcc(const std::vector<double>& raw_frame, std::size_t nfft, std::size_t filters,
                                       std::size_t count, double rate = 16000.0) {
  const std::size_t n = raw_frame.size();
  std::vector<double> frame(n);
  for (std::size_t i = 0; i < n; ++i) {
    frame[i] = raw_frame[i] * (0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (n - 1.0)));
  }
  std::vector<double> power(nfft / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) {
    long double re = 0.0L;
    long double im = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      const long double ang = -2.0L * std::numbers::pi_v<long double> * k * i / nfft;
      re += frame[i] * std::cos(ang);
      im += frame[i] * std::sin(ang);
    }
    power[k] = static_cast<double>((re * re + im * im) / (static_cast<long double>(n) * n));
  }

  auto mel = [](double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); };
  auto inv = [](double m) { return 700.0 * (std::exp(m / 1127.0) - 1.0); };
  const double top = mel(rate / 2.0);
  std::vector<double> logs(filters);
  for (std::size_t m = 0; m < filters; ++m) {
    const double a = inv(top * m / (filters + 1.0));
    const double b = inv(top * (m + 1.0) / (filters + 1.0));
    const double c = inv(top * (m + 2.0) / (filters + 1.0));
    double e = 0.0;
    for (std::size_t k = 0; k < power.size(); ++k) {
      const double f = k * rate / nfft;
      double w = 0.0;
      if (f > a && f <= b) {
        w = (f - a) / (b - a);
      } else if (f > b && f < c) {
        w = (c - f) / (c - b);
      }
      e += w * power[k];
    }
    logs[m] = std::log(e < 1e-10 ? 1e-10 : e);
  }
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    double s = 0.0;
    for (std::size_t m = 0; m < filters; ++m) {
      s += logs[m] * std::cos(std::numbers::pi * i * (2.0 * m + 1.0) / (2.0 * filters));
    }
    out[i] = s * (i == 0 ? std::sqrt(1.0 / filters) : std::sqrt(2.0 / filters));
  }
  return out;
}

}  // namespace sertl::testing
