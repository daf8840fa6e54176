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

// Writes <dir>/manifest.jsonl with three tone clips of 1.0, 0.5 and 2.0 s.
// With "--drop-last" the third clip is listed but not written.

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>

#include "sertl/audio.hpp"
#include "sertl/dataset.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: make_wav_fixture <dir> [--drop-last]\n";
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  const bool drop_last = argc > 2 && std::strcmp(argv[2], "--drop-last") == 0;
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::trunc);
  const double seconds[] = {1.0, 0.5, 2.0};
  const char* labels[] = {"neu", "ang", "exc"};
  for (int i = 0; i < 3; ++i) {
    sertl::UtteranceRecord r;
    r.id = "Ses01F_fixture_" + std::to_string(i);
    r.session = 1;
    r.speaker = "Ses01F";
    r.label_raw = labels[i];
    r.label = sertl::map_label(r.label_raw).value();
    r.audio = "clip" + std::to_string(i) + ".wav";
    sertl::AudioClip clip;
    clip.samples.resize(static_cast<std::size_t>(seconds[i] * sertl::kSampleRate));
    for (std::size_t n = 0; n < clip.samples.size(); ++n) {
      const double t = static_cast<double>(n) / sertl::kSampleRate;
      clip.samples[n] = 0.3 * std::sin(2.0 * std::numbers::pi * (220.0 * (i + 1)) * t) + 0.05 * std::sin(1.7 * n);
    }
    if (!(drop_last && i == 2)) {
      sertl::write_wav(dir / r.audio, clip);
    }
    manifest << sertl::to_json(r).dump() << "\n";
  }
  return 0;
}
