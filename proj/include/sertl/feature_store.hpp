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

#include <filesystem>
#include <map>
#include <string>
#include <utility>

#include "sertl/emb_io.hpp"
#include "sertl/error.hpp"
#include "sertl/frame_sequence.hpp"

namespace sertl {

/// Where per-utterance frame sequences come from.
class FeatureStore {
 public:
  virtual ~FeatureStore() = default;
  virtual bool contains(const std::string& id, SourceKind kind) const = 0;
  /// Throws DataError naming the utterance when absent.
  virtual FrameSequence load(const std::string& id, SourceKind kind) const = 0;
};

/// EMB1 files laid out as <root>/<kind>/<id>.emb1.
class DirectoryFeatureStore : public FeatureStore {
 public:
  explicit DirectoryFeatureStore(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const noexcept { return root_; }

  bool contains(const std::string& id, SourceKind kind) const override {
    return std::filesystem::is_regular_file(emb::container_path(root_, kind, id));
  }

  FrameSequence load(const std::string& id, SourceKind kind) const override {
    const auto path = emb::container_path(root_, kind, id);
    if (!std::filesystem::is_regular_file(path)) {
      throw DataError("utterance '" + id + "': missing " + std::string(to_string(kind)) + " embedding " +
                      path.string());
    }
    FrameSequence seq = emb::read_container(path);
    if (seq.source_kind != kind) {
      throw DataError("utterance '" + id + "': " + path.string() + " holds " +
                      std::string(to_string(seq.source_kind)) + " features");
    }
    return seq;
  }

 private:
  std::filesystem::path root_;
};

class MemoryFeatureStore : public FeatureStore {
 public:
  void put(const std::string& id, FrameSequence seq) {
    const SourceKind kind = seq.source_kind;
    items_[{kind, id}] = std::move(seq);
  }

  bool contains(const std::string& id, SourceKind kind) const override { return items_.contains({kind, id}); }

  FrameSequence load(const std::string& id, SourceKind kind) const override {
    const auto it = items_.find({kind, id});
    if (it == items_.end()) {
      throw DataError("utterance '" + id + "': no " + std::string(to_string(kind)) + " features in store");
    }
    return it->second;
  }

  std::size_t size() const noexcept { return items_.size(); }

 private:
  std::map<std::pair<SourceKind, std::string>, FrameSequence> items_;
};

}  // namespace sertl
