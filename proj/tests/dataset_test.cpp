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

#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "sertl/dataset.hpp"

namespace sertl {
namespace {

std::string line(const std::string& id, int session, const std::string& label) {
  return R"({"id":")" + id + R"(","session":)" + std::to_string(session) + R"(,"speaker":"S)" +
         std::to_string(session) + R"(F","label_raw":")" + label +
         R"(","audio":"wav/)" + id + R"(.wav","transcript":"hi","duration_s":2.5})";
}

std::vector<UtteranceRecord> synthetic_records(std::size_t per_session_class) {
  std::vector<UtteranceRecord> out;
  for (int s = 1; s <= kNumSessions; ++s) {
    for (Emotion e : kEmotions) {
      for (std::size_t i = 0; i < per_session_class; ++i) {
        UtteranceRecord r;
        r.id = "s" + std::to_string(s) + "_" + std::string(to_string(e)) + "_" + std::to_string(i);
        r.session = s;
        r.speaker = "S" + std::to_string(s) + (i % 2 ? "M" : "F");
        r.label = e;
        out.push_back(r);
      }
    }
  }
  return out;
}

TEST(Labels, MappingIsTotalOnTargetsAndMergesExcitement) {
  for (Emotion e : kEmotions) {
    EXPECT_EQ(map_label(to_string(e)), e);
  }
  EXPECT_EQ(map_label("neu"), Emotion::kNeutral);
  EXPECT_EQ(map_label("hap"), Emotion::kHappy);
  EXPECT_EQ(map_label("exc"), Emotion::kHappy);
  EXPECT_EQ(map_label("Excited"), Emotion::kHappy);
  EXPECT_EQ(map_label("ang"), Emotion::kAngry);
  EXPECT_FALSE(map_label("fru"));
  EXPECT_FALSE(map_label("fear"));
  EXPECT_FALSE(map_label(""));
}

TEST(Manifest, ParsesAndCountsExclusions) {
  std::stringstream in;
  in << line("a", 1, "neu") << "\n"
     << line("b", 2, "exc") << "\n\n"
     << line("c", 3, "fru") << "\n"
     << line("d", 4, "fru") << "\n"
     << line("e", 5, "xxx") << "\n";
  const auto rep = parse_manifest(in, "/data");
  EXPECT_EQ(rep.lines, 5u);
  ASSERT_EQ(rep.records.size(), 2u);
  EXPECT_EQ(rep.excluded, 3u);
  EXPECT_EQ(rep.excluded_by_label.at("fru"), 2u);
  EXPECT_EQ(rep.records[1].label, Emotion::kHappy);
  EXPECT_EQ(rep.records[1].label_raw, "exc");
  EXPECT_EQ(rep.records[0].audio, std::filesystem::path("/data/wav/a.wav"));
  EXPECT_DOUBLE_EQ(rep.records[0].duration_s, 2.5);
}

TEST(Manifest, MalformedLineNamesLineNumber) {
  std::stringstream in;
  in << line("a", 1, "neu") << "\n{not json\n";
  try {
    parse_manifest(in, {}, "m.jsonl");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("m.jsonl:2"), std::string::npos) << e.what();
  }
}

TEST(Manifest, MissingFieldAndBadSessionAndDuplicate) {
  {
    std::stringstream in(R"({"id":"a","session":1,"label_raw":"neu"})");
    EXPECT_THROW(parse_manifest(in), DataError);
  }
  {
    std::stringstream in(line("a", 6, "neu"));
    EXPECT_THROW(parse_manifest(in), DataError);
  }
  {
    std::stringstream in(line("a", 1, "neu") + "\n" + line("a", 2, "sad"));
    EXPECT_THROW(parse_manifest(in), DataError);
  }
}

TEST(Manifest, MissingFileIsIoError) { EXPECT_THROW(load_manifest("/nonexistent/m.jsonl"), IoError); }

TEST(Crop, KeepsFloorOfBudgetFromStart) {
  FrameSequence seq;
  seq.frame_hop_ms = 25.0;
  seq.frames = Matrix(300, 2);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    seq.frames[i] = static_cast<double>(i);
  }
  const auto out = crop_frames(seq, 5.0);
  ASSERT_EQ(out.length(), 200u);
  EXPECT_EQ(out.frames(199, 1), seq.frames(199, 1));
  seq.frame_hop_ms = 20.0;
  EXPECT_EQ(crop_frames(seq, 5.0).length(), 250u);
  seq.frame_hop_ms = 30.0;  // 166.67
  EXPECT_EQ(crop_frames(seq, 5.0).length(), 166u);
  seq.frame_hop_ms = 10.0;
  EXPECT_EQ(crop_frames(seq, 5.0).length(), 300u);
  seq.frame_hop_ms = 0.0;
  EXPECT_THROW(crop_frames(seq, 5.0), ConfigError);
}

TEST(Folds, LeaveOneSessionOutIsDisjointAndCovering) {
  const auto records = synthetic_records(3);
  const FoldPlan plan = make_folds(records);
  std::multiset<std::size_t> tested;
  for (std::size_t k = 0; k < plan.folds.size(); ++k) {
    const Fold& fold = plan.folds[k];
    EXPECT_EQ(fold.test_session, static_cast<int>(k + 1));
    const FoldSplit split = split_records(records, fold);
    EXPECT_EQ(split.train.size() + split.test.size(), records.size());
    std::set<std::string> train_speakers;
    for (std::size_t i : split.train) {
      EXPECT_NE(records[i].session, fold.test_session);
      train_speakers.insert(records[i].speaker);
    }
    for (std::size_t i : split.test) {
      EXPECT_EQ(records[i].session, fold.test_session);
      EXPECT_FALSE(train_speakers.contains(records[i].speaker));
      tested.insert(i);
    }
  }
  EXPECT_EQ(tested.size(), records.size());
  EXPECT_EQ(std::set<std::size_t>(tested.begin(), tested.end()).size(), records.size());
}

TEST(Folds, MissingSessionRejected) {
  auto records = synthetic_records(1);
  std::erase_if(records, [](const UtteranceRecord& r) { return r.session == 3; });
  EXPECT_THROW(make_folds(records), DataError);
}

TEST(Subsample, BalancedSeededAndNested) {
  const auto records = synthetic_records(10);
  std::vector<std::size_t> pool(records.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    pool[i] = i;
  }
  const auto small = subsample_balanced(records, pool, 5, 42);
  const auto large = subsample_balanced(records, pool, 20, 42);
  ASSERT_EQ(small.size(), 20u);
  ASSERT_EQ(large.size(), 80u);
  std::array<int, kNumClasses> counts{};
  for (std::size_t i : small) {
    ++counts[static_cast<std::size_t>(records[i].label)];
  }
  for (int c : counts) {
    EXPECT_EQ(c, 5);
  }
  EXPECT_TRUE(std::includes(large.begin(), large.end(), small.begin(), small.end()));
  EXPECT_EQ(subsample_balanced(records, pool, 5, 42), small);
  EXPECT_NE(subsample_balanced(records, pool, 5, 43), small);
  EXPECT_EQ(std::set<std::size_t>(large.begin(), large.end()).size(), large.size());
}

TEST(Subsample, ShortClassNamedInError) {
  auto records = synthetic_records(2);
  std::erase_if(records, [](const UtteranceRecord& r) { return r.label == Emotion::kSad && r.session > 1; });
  std::vector<std::size_t> pool(records.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    pool[i] = i;
  }
  try {
    subsample_balanced(records, pool, 3, 1);
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("sad"), std::string::npos) << msg;
    EXPECT_NE(msg.find("only 2"), std::string::npos) << msg;
  }
}

}  // namespace
}  // namespace sertl
