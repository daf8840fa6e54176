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

// Synthetic 4-class, 5-session corpora for end-to-end checks. Class c has
// mean vector mu_c ~ N(0, separation^2 I); a frame of an utterance is
// mu_c + speaker offset + N(0, noise^2 I), T uniform in [min_len, max_len].

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "sertl/dataset.hpp"
#include "sertl/emb_io.hpp"
#include "sertl/feature_store.hpp"
#include "sertl/rng.hpp"

namespace sertl {

struct SyntheticOptions {
  SourceKind kind = SourceKind::kLld;
  std::size_t per_session_class = 10;
  double separation = 1.0;
  double noise = 1.0;
  double speaker_shift = 0.0;
  std::size_t min_len = 20;
  std::size_t max_len = 100;
  /// Also emit BERT-shaped token sequences carrying the class signal.
  bool with_text = false;
  std::size_t min_tokens = 3;
  std::size_t max_tokens = 12;
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  std::vector<UtteranceRecord> records;
  MemoryFeatureStore store;
};

inline SyntheticCorpus make_synthetic(const SyntheticOptions& opt) {
  if (opt.min_len == 0 || opt.min_len > opt.max_len || opt.min_tokens == 0 || opt.min_tokens > opt.max_tokens) {
    throw ConfigError("synthetic: invalid length range");
  }
  if (opt.kind == SourceKind::kBert) {
    throw ConfigError("synthetic: acoustic kind must be lld or wav2vec");
  }
  Rng rng(opt.seed);
  const std::size_t n = feature_dim(opt.kind);
  auto draw_means = [&](std::size_t dim) {
    std::vector<std::vector<double>> means(kNumClasses, std::vector<double>(dim));
    for (auto& m : means) {
      for (double& v : m) {
        v = rng.normal(0.0, opt.separation);
      }
    }
    return means;
  };
  const auto audio_means = draw_means(n);
  const auto text_means = draw_means(kBertDim);
  // Values are kept at f32 precision so in-memory and EMB1 copies agree.
  auto as_f32 = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  const double hop = opt.kind == SourceKind::kLld ? 25.0 : 10.0;

  SyntheticCorpus corpus;
  for (int session = 1; session <= kNumSessions; ++session) {
    for (const char* gender : {"F", "M"}) {
      const std::string speaker = "Ses0" + std::to_string(session) + gender;
      std::vector<double> shift(n);
      for (double& v : shift) {
        v = rng.normal(0.0, opt.speaker_shift);
      }
      const std::size_t share = gender[0] == 'F' ? (opt.per_session_class + 1) / 2 : opt.per_session_class / 2;
      for (Emotion e : kEmotions) {
        const auto c = static_cast<std::size_t>(e);
        for (std::size_t i = 0; i < share; ++i) {
          UtteranceRecord r;
          r.id = speaker + "_" + std::string(to_string(e)) + "_" + std::to_string(i);
          r.session = session;
          r.speaker = speaker;
          r.label = e;
          r.label_raw = std::string(to_string(e));
          FrameSequence audio;
          audio.source_kind = opt.kind;
          audio.frame_hop_ms = hop;
          audio.frames = Matrix(opt.min_len + rng.below(opt.max_len - opt.min_len + 1), n);
          for (std::size_t t = 0; t < audio.frames.rows(); ++t) {
            for (std::size_t d = 0; d < n; ++d) {
              audio.frames(t, d) = as_f32(audio_means[c][d] + shift[d] + rng.normal(0.0, opt.noise));
            }
          }
          r.duration_s = static_cast<double>(audio.length()) * hop / 1000.0;
          corpus.store.put(r.id, std::move(audio));
          if (opt.with_text) {
            FrameSequence text;
            text.source_kind = SourceKind::kBert;
            text.frames = Matrix(opt.min_tokens + rng.below(opt.max_tokens - opt.min_tokens + 1), kBertDim);
            for (std::size_t t = 0; t < text.frames.rows(); ++t) {
              for (std::size_t d = 0; d < kBertDim; ++d) {
                text.frames(t, d) = as_f32(text_means[c][d] + rng.normal(0.0, opt.noise));
              }
            }
            r.transcript = "synthetic " + std::string(to_string(e));
            corpus.store.put(r.id, std::move(text));
          }
          corpus.records.push_back(std::move(r));
        }
      }
    }
  }
  return corpus;
}

/// Writes manifest.jsonl plus EMB1 containers under out/emb.
inline void write_synthetic(const SyntheticCorpus& corpus, SourceKind kind, bool with_text,
                            const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  std::ofstream manifest(out / "manifest.jsonl", std::ios::trunc);
  if (!manifest) {
    throw IoError("cannot write " + (out / "manifest.jsonl").string());
  }
  for (const auto& r : corpus.records) {
    manifest << to_json(r).dump() << "\n";
    emb::write_container(corpus.store.load(r.id, kind), emb::container_path(out / "emb", kind, r.id));
    if (with_text) {
      emb::write_container(corpus.store.load(r.id, SourceKind::kBert),
                           emb::container_path(out / "emb", SourceKind::kBert, r.id));
    }
  }
}

}  // namespace sertl
