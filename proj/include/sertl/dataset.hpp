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
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sertl/error.hpp"
#include "sertl/frame_sequence.hpp"
#include "sertl/rng.hpp"

namespace sertl {

enum class Emotion : int { kNeutral = 0, kHappy = 1, kSad = 2, kAngry = 3 };

inline constexpr std::size_t kNumClasses = 4;
inline constexpr int kNumSessions = 5;
inline constexpr std::array<Emotion, kNumClasses> kEmotions = {Emotion::kNeutral, Emotion::kHappy, Emotion::kSad,
                                                               Emotion::kAngry};

inline std::string_view to_string(Emotion e) {
  switch (e) {
    case Emotion::kNeutral:
      return "neutral";
    case Emotion::kHappy:
      return "happy";
    case Emotion::kSad:
      return "sad";
    case Emotion::kAngry:
      return "angry";
  }
  return "unknown";
}

/// Maps raw corpus labels onto the four target classes. Excitement is
/// merged into happy; anything else (fear, frustration, ...) has no class.
inline std::optional<Emotion> map_label(std::string_view raw) {
  std::string s(raw);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "neutral" || s == "neu") {
    return Emotion::kNeutral;
  }
  if (s == "happy" || s == "hap" || s == "happiness" || s == "exc" || s == "excited" || s == "excitement") {
    return Emotion::kHappy;
  }
  if (s == "sad" || s == "sadness") {
    return Emotion::kSad;
  }
  if (s == "angry" || s == "ang" || s == "anger") {
    return Emotion::kAngry;
  }
  return std::nullopt;
}

struct UtteranceRecord {
  std::string id;
  int session = 0;
  std::string speaker;
  Emotion label = Emotion::kNeutral;
  std::string label_raw;
  std::filesystem::path audio;
  std::string transcript;
  double duration_s = 0.0;
};

struct ManifestReport {
  std::vector<UtteranceRecord> records;
  std::size_t lines = 0;
  std::size_t excluded = 0;
  std::map<std::string, std::size_t> excluded_by_label;
};

/// Parses JSON-lines manifest text. Relative audio paths are resolved
/// against base_dir.
inline ManifestReport parse_manifest(std::istream& in, const std::filesystem::path& base_dir = {},
                                     const std::string& source = "manifest") {
  ManifestReport report;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    ++report.lines;
    const auto where = source + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + ": malformed JSON (" + e.what() + ")");
    }
    UtteranceRecord r;
    try {
      if (!j.is_object()) {
        throw DataError(where + ": expected a JSON object");
      }
      r.id = j.at("id").get<std::string>();
      r.session = j.at("session").get<int>();
      r.speaker = j.at("speaker").get<std::string>();
      r.label_raw = j.at("label_raw").get<std::string>();
      r.audio = j.value("audio", std::string{});
      r.transcript = j.value("transcript", std::string{});
      r.duration_s = j.value("duration_s", 0.0);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": bad or missing field (" + e.what() + ")");
    }
    if (r.id.empty()) {
      throw DataError(where + ": empty id");
    }
    if (r.session < 1 || r.session > kNumSessions) {
      throw DataError(where + ": session " + std::to_string(r.session) + " outside 1..5");
    }
    if (!seen.insert(r.id).second) {
      throw DataError(where + ": duplicate id '" + r.id + "'");
    }
    const auto label = map_label(r.label_raw);
    if (!label) {
      ++report.excluded;
      ++report.excluded_by_label[r.label_raw];
      continue;
    }
    r.label = *label;
    if (!r.audio.empty() && r.audio.is_relative() && !base_dir.empty()) {
      r.audio = base_dir / r.audio;
    }
    report.records.push_back(std::move(r));
  }
  return report;
}

inline ManifestReport load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open manifest " + path.string());
  }
  return parse_manifest(in, path.parent_path(), path.string());
}

inline nlohmann::json to_json(const UtteranceRecord& r) {
  return {{"id", r.id},
          {"session", r.session},
          {"speaker", r.speaker},
          {"label_raw", r.label_raw.empty() ? std::string(to_string(r.label)) : r.label_raw},
          {"audio", r.audio.string()},
          {"transcript", r.transcript},
          {"duration_s", r.duration_s}};
}

/// Keeps the first floor(max_s * 1000 / hop) frames.
inline FrameSequence crop_frames(const FrameSequence& seq, double max_s = 5.0) {
  if (!(seq.frame_hop_ms > 0.0)) {
    throw ConfigError("crop_frames: sequence has no frame rate (hop " + std::to_string(seq.frame_hop_ms) + " ms)");
  }
  const auto limit = static_cast<std::size_t>(std::floor(max_s * 1000.0 / seq.frame_hop_ms + 1e-9));
  if (seq.length() <= limit) {
    return seq;
  }
  FrameSequence out;
  out.frame_hop_ms = seq.frame_hop_ms;
  out.source_kind = seq.source_kind;
  out.frames = Matrix(limit, seq.dim());
  std::copy_n(seq.frames.data(), limit * seq.dim(), out.frames.data());
  return out;
}

struct Fold {
  int test_session = 0;
  std::array<int, kNumSessions - 1> train_sessions{};
};

/// Leave-one-session-out plan; fold k (1-based) tests on session k.
struct FoldPlan {
  std::array<Fold, kNumSessions> folds{};
};

inline FoldPlan make_folds(std::span<const UtteranceRecord> records) {
  std::set<int> sessions;
  for (const auto& r : records) {
    sessions.insert(r.session);
  }
  for (int s = 1; s <= kNumSessions; ++s) {
    if (!sessions.contains(s)) {
      throw DataError("make_folds: no utterances from session " + std::to_string(s));
    }
  }
  FoldPlan plan;
  for (int k = 1; k <= kNumSessions; ++k) {
    Fold& f = plan.folds[static_cast<std::size_t>(k - 1)];
    f.test_session = k;
    std::size_t i = 0;
    for (int s = 1; s <= kNumSessions; ++s) {
      if (s != k) {
        f.train_sessions[i++] = s;
      }
    }
  }
  return plan;
}

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline FoldSplit split_records(std::span<const UtteranceRecord> records, const Fold& fold) {
  FoldSplit out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].session == fold.test_session) {
      out.test.push_back(i);
    } else if (std::find(fold.train_sessions.begin(), fold.train_sessions.end(), records[i].session) !=
               fold.train_sessions.end()) {
      out.train.push_back(i);
    }
  }
  return out;
}

/// Draws per_class records of every class from `pool` (indices into
/// records), uniformly without replacement. Each class list is fully
/// shuffled and its prefix taken, so for a fixed seed a larger per_class
/// always selects a superset. Returned indices are sorted.
inline std::vector<std::size_t> subsample_balanced(std::span<const UtteranceRecord> records,
                                                   std::span<const std::size_t> pool, std::size_t per_class,
                                                   std::uint64_t seed) {
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i : pool) {
    by_class[static_cast<std::size_t>(records[i].label)].push_back(i);
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (by_class[c].size() < per_class) {
      throw DataError("subsample_balanced: class '" + std::string(to_string(kEmotions[c])) + "' has only " +
                      std::to_string(by_class[c].size()) + " records, " + std::to_string(per_class) + " requested");
    }
  }
  Rng rng(seed);
  std::vector<std::size_t> out;
  out.reserve(per_class * kNumClasses);
  for (auto& members : by_class) {
    rng.shuffle(std::span<std::size_t>(members));
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(per_class));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace sertl
