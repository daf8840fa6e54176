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

#include <numeric>

#include "sertl/report.hpp"
#include "sertl/synthetic.hpp"
#include "sertl/training.hpp"
#include "support/metric_oracle.hpp"

namespace sertl {
namespace {

TrainConfig quick_config(ModelKind kind = ModelKind::kMeanPool, SourceKind features = SourceKind::kLld) {
  TrainConfig cfg;
  cfg.features = features;
  cfg.model = make_spec(kind, feature_dim(features));
  cfg.epochs = 1;
  return cfg;
}

SyntheticCorpus corpus(std::size_t per_session_class, double separation = 1.0, std::uint64_t seed = 1) {
  SyntheticOptions o;
  o.per_session_class = per_session_class;
  o.separation = separation;
  o.seed = seed;
  return make_synthetic(o);
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// --- metrics ---------------------------------------------------------------

TEST(Metrics, PerfectDiagonal) {
  Confusion c;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    c.counts[k][k] = 10;
  }
  EXPECT_EQ(unweighted_accuracy(c), 1.0);
  EXPECT_EQ(weighted_accuracy(c), 1.0);
}

TEST(Metrics, UnweightedIgnoresClassSizes) {
  Confusion c;
  c.counts[0] = {40, 0, 0, 0};   // recall 1.0
  c.counts[1] = {3, 3, 0, 0};    // 0.5
  c.counts[2] = {0, 50, 50, 0};  // 0.5
  c.counts[3] = {0, 0, 2, 0};    // 0.0
  EXPECT_DOUBLE_EQ(unweighted_accuracy(c), 0.5);
  EXPECT_EQ(unweighted_accuracy(c), testing::oracle_ua(c));
  EXPECT_DOUBLE_EQ(weighted_accuracy(c), 93.0 / 148.0);
}

TEST(Metrics, MatchOracleOnRandomMatrices) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const Confusion c = testing::random_confusion(rng);
    EXPECT_EQ(unweighted_accuracy(c), testing::oracle_ua(c));
    EXPECT_EQ(weighted_accuracy(c), testing::oracle_wa(c));
  }
}

TEST(Metrics, DuplicatingTestSetKeepsUa) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> truth;
    std::vector<int> pred;
    for (int i = 0; i < 40; ++i) {
      truth.push_back(static_cast<int>(rng.below(4)));
      pred.push_back(static_cast<int>(rng.below(4)));
    }
    const double base = unweighted_accuracy(confusion_of(truth, pred));
    const std::size_t k = 2 + rng.below(4);
    std::vector<int> t2;
    std::vector<int> p2;
    for (std::size_t r = 0; r < k; ++r) {
      t2.insert(t2.end(), truth.begin(), truth.end());
      p2.insert(p2.end(), pred.begin(), pred.end());
    }
    EXPECT_NEAR(unweighted_accuracy(confusion_of(t2, p2)), base, 1e-15);
  }
}

TEST(Metrics, RandomPredictorNearChance) {
  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    std::vector<int> truth;
    std::vector<int> pred;
    for (int i = 0; i < 400; ++i) {
      truth.push_back(i % 4);
      pred.push_back(static_cast<int>(rng.below(4)));
    }
    mean += unweighted_accuracy(confusion_of(truth, pred)) / 10.0;
  }
  EXPECT_NEAR(mean, 0.25, 0.03);
}

TEST(Metrics, BadIndicesRejected) {
  Confusion c;
  EXPECT_THROW(c.add(4, 0), DataError);
  const std::vector<int> a = {0, 1};
  const std::vector<int> b = {0};
  EXPECT_THROW(confusion_of(a, b), DimensionError);
}

// --- train_one / evaluate ----------------------------------------------------

TEST(TrainOne, SeparableDataDrivesLossDown) {
  const auto c = corpus(40, 2.0);
  TrainConfig cfg = quick_config();
  cfg.epochs = 50;
  ExampleSource source(c.records, c.store, cfg.features, false, cfg.crop_s);
  const auto idx = all_indices(c.records.size());
  const TrainResult r = train_one(source, idx, cfg, 5);
  EXPECT_LT(r.epoch_loss.back(), 0.1);
  EXPECT_GT(r.epoch_loss.front(), r.epoch_loss.back());
  const Evaluation ev = evaluate(const_cast<Model&>(r.model), source, idx);
  EXPECT_GT(ev.ua, 0.95);
}

TEST(TrainOne, ZeroEpochsReturnsInitialization) {
  const auto c = corpus(2);
  TrainConfig cfg = quick_config(ModelKind::kMlpPool);
  cfg.epochs = 0;
  ExampleSource source(c.records, c.store, cfg.features, false, cfg.crop_s);
  const TrainResult r = train_one(source, all_indices(c.records.size()), cfg, 9);
  Rng rng(9);
  const Model init(cfg.model, rng);
  for (std::size_t i = 0; i < init.params().slots().size(); ++i) {
    EXPECT_EQ(r.model.params().slots()[i].value, init.params().slots()[i].value);
  }
  EXPECT_TRUE(r.batch_loss.empty());
}

TEST(TrainOne, DeterministicAndTraceLength) {
  const auto c = corpus(3);
  TrainConfig cfg = quick_config(ModelKind::kAttentionPool);
  cfg.epochs = 3;
  ExampleSource source(c.records, c.store, cfg.features, false, cfg.crop_s);
  std::vector<std::size_t> idx = all_indices(c.records.size());
  idx.resize(37);
  const TrainResult a = train_one(source, idx, cfg, 4);
  const TrainResult b = train_one(source, idx, cfg, 4);
  EXPECT_EQ(a.batch_loss, b.batch_loss);
  EXPECT_EQ(a.batch_loss.size(), 3u * 3u);  // ceil(37 / 16) = 3
  EXPECT_EQ(a.epoch_loss.size(), 3u);
  EXPECT_EQ(a.trained, idx);
  const TrainResult other = train_one(source, idx, cfg, 5);
  EXPECT_NE(a.batch_loss, other.batch_loss);
}

TEST(TrainOne, EmptyTrainingSetRejected) {
  const auto c = corpus(1);
  ExampleSource source(c.records, c.store, SourceKind::kLld, false, 5.0);
  EXPECT_THROW(train_one(source, {}, quick_config(), 0), DataError);
}

TEST(ExampleSourceTest, CropsToBudget) {
  SyntheticOptions o;
  o.per_session_class = 1;
  o.min_len = 300;
  o.max_len = 300;
  const auto c = make_synthetic(o);
  ExampleSource source(c.records, c.store, SourceKind::kLld, false, 5.0);
  EXPECT_EQ(source.get(0)->audio.rows(), 200u);
  ExampleSource uncached(c.records, c.store, SourceKind::kLld, false, 2.0, 0);
  EXPECT_EQ(uncached.get(0)->audio.rows(), 80u);
}

// --- run_cv ------------------------------------------------------------------

TEST(RunCv, FoldsTestOnTheirOwnSession) {
  const auto c = corpus(4);
  const RunReport r = run_cv(c.records, c.store, quick_config());
  ASSERT_EQ(r.folds.size(), 5u);
  ASSERT_TRUE(r.ok());
  double ua = 0.0;
  for (const auto& f : r.folds) {
    EXPECT_EQ(f.test_session, f.fold);
    EXPECT_EQ(f.test_size, 16u);
    EXPECT_EQ(f.train_size, 64u);
    EXPECT_EQ(f.confusion.total(), f.test_size);
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      EXPECT_EQ(f.confusion.support(k), 4u);
    }
    ua += f.ua / 5.0;
  }
  EXPECT_NEAR(r.mean_ua, ua, 1e-12);
}

TEST(RunCv, PerClassLimitGivesBalancedTrainingSets) {
  const auto c = corpus(32);
  TrainConfig cfg = quick_config();
  cfg.per_class_limit = 125;
  cfg.folds = {2, 4};
  const RunReport r = run_cv(c.records, c.store, cfg);
  ASSERT_EQ(r.folds.size(), 2u);
  for (const auto& f : r.folds) {
    EXPECT_EQ(f.train_size, 500u);
    EXPECT_EQ(f.batch_loss.size(), 32u);  // ceil(500 / 16)
  }
  cfg.per_class_limit = 129;
  EXPECT_THROW(run_cv(c.records, c.store, cfg), DataError);
}

TEST(RunCv, DeterministicAndThreadCountIndependent) {
  const auto c = corpus(3);
  TrainConfig cfg = quick_config(ModelKind::kMlpPool);
  cfg.model.mlp_hidden = {8};
  cfg.epochs = 2;
  const RunReport a = run_cv(c.records, c.store, cfg);
  const RunReport b = run_cv(c.records, c.store, cfg);
  EXPECT_TRUE(same_results(a, b));
  EXPECT_EQ(to_json(a).at("folds").dump(), to_json(b).at("folds").dump());
  cfg.threads = 3;
  RunReport t = run_cv(c.records, c.store, cfg);
  t.config.threads = 1;
  EXPECT_TRUE(same_results(a, t));
}

TEST(RunCv, MissingEmbeddingNamedBeforeTraining) {
  auto c = corpus(1);
  UtteranceRecord ghost = c.records.front();
  ghost.id = "Ses05M_ghost";
  ghost.session = 5;
  c.records.push_back(ghost);
  try {
    run_cv(c.records, c.store, quick_config());
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("Ses05M_ghost"), std::string::npos) << e.what();
  }
}

TEST(RunCv, BimodalWithoutTextRejectedUpfront) {
  SyntheticOptions o;
  o.kind = SourceKind::kWav2vec;
  o.per_session_class = 1;
  const auto c = make_synthetic(o);
  TrainConfig cfg = quick_config(ModelKind::kBimodalAlign, SourceKind::kWav2vec);
  EXPECT_THROW(run_cv(c.records, c.store, cfg), DataError);
}

TEST(RunCv, BimodalRunsEndToEnd) {
  SyntheticOptions o;
  o.kind = SourceKind::kWav2vec;
  o.per_session_class = 2;
  o.min_len = 5;
  o.max_len = 12;
  o.with_text = true;
  const auto c = make_synthetic(o);
  TrainConfig cfg = quick_config(ModelKind::kBimodalAlign, SourceKind::kWav2vec);
  cfg.model.rnn_hidden = 4;
  cfg.folds = {1};
  const RunReport r = run_cv(c.records, c.store, cfg);
  ASSERT_TRUE(r.ok()) << r.folds[0].error;
  EXPECT_EQ(r.folds[0].confusion.total(), 8u);
}

class FlakyStore : public FeatureStore {
 public:
  FlakyStore(const FeatureStore& inner, std::string bad) : inner_(inner), bad_(std::move(bad)) {}
  bool contains(const std::string& id, SourceKind kind) const override { return inner_.contains(id, kind); }
  FrameSequence load(const std::string& id, SourceKind kind) const override {
    if (id == bad_) {
      throw IoError("read error on " + id);
    }
    return inner_.load(id, kind);
  }

 private:
  const FeatureStore& inner_;
  std::string bad_;
};

TEST(RunCv, FoldFailureRecordedOthersContinue) {
  const auto c = corpus(2);
  std::string bad;
  for (const auto& r : c.records) {
    if (r.session == 3) {
      bad = r.id;
      break;
    }
  }
  const FlakyStore store(c.store, bad);
  const RunReport r = run_cv(c.records, store, quick_config());
  EXPECT_FALSE(r.ok());
  int failed = 0;
  for (const auto& f : r.folds) {
    failed += f.ok() ? 0 : 1;
  }
  // Session 3 is tested in fold 3 and trained on elsewhere: every fold fails.
  EXPECT_EQ(failed, 5);
  EXPECT_NE(r.folds[0].error.find(bad), std::string::npos);
}

// --- scaling -----------------------------------------------------------------

TEST(Scaling, SinglePointMatchesRunCv) {
  const auto c = corpus(32);
  TrainConfig cfg = quick_config();
  cfg.folds = {1, 5};
  const auto points = run_scaling_curve(c.records, c.store, cfg, {500});
  TrainConfig direct = cfg;
  direct.per_class_limit = 125;
  const RunReport r = run_cv(c.records, c.store, direct);
  ASSERT_EQ(points.size(), 1u);
  EXPECT_TRUE(same_results(points[0].report, r));
  EXPECT_EQ(points[0].report.mean_ua, r.mean_ua);
}

TEST(Scaling, SizeValidation) {
  const auto c = corpus(2);
  const TrainConfig cfg = quick_config();
  EXPECT_THROW(run_scaling_curve(c.records, c.store, cfg, {}), ConfigError);
  EXPECT_THROW(run_scaling_curve(c.records, c.store, cfg, {8, 4}), ConfigError);
  EXPECT_THROW(run_scaling_curve(c.records, c.store, cfg, {6}), ConfigError);
  EXPECT_THROW(run_scaling_curve(c.records, c.store, cfg, {0, 8}), ConfigError);
  const auto pts = run_scaling_curve(c.records, c.store, cfg, {8, 0});
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0].report.folds[0].train_size, 8u);
  EXPECT_EQ(pts[1].report.folds[0].train_size, 32u);
  const std::string csv = scaling_csv(pts);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kScalingHeader);
  EXPECT_NE(csv.find("\nfull,full,"), std::string::npos);
}

// --- config and report files -------------------------------------------------

TEST(Config, OverridesValidatedBeforeApplying) {
  TrainConfig cfg = quick_config();
  const TrainConfig before = cfg;
  EXPECT_THROW(apply_overrides(cfg, {{"epochs", "3"}, {"learning_rate", "1"}}), ConfigError);
  EXPECT_EQ(to_json(cfg), to_json(before));
  apply_overrides(cfg, {{"epochs", "7"}, {"model", "mlp_pool"}, {"features", "wav2vec"}, {"folds", "1,3"}});
  EXPECT_EQ(cfg.epochs, 7u);
  EXPECT_EQ(cfg.model.input_dim, 512u);
  EXPECT_EQ(cfg.model.mlp_hidden, (std::vector<std::size_t>{256, 256}));
  EXPECT_EQ(cfg.folds, (std::vector<int>{1, 3}));
  apply_overrides(cfg, {{"mlp_hidden", "64,32"}, {"per_class", "125"}, {"dropout", "0.5"}});
  EXPECT_EQ(cfg.model.mlp_hidden, (std::vector<std::size_t>{64, 32}));
  EXPECT_EQ(cfg.per_class_limit, 125u);
  EXPECT_THROW(apply_overrides(cfg, {{"epochs", "ten"}}), ConfigError);
  EXPECT_THROW(apply_overrides(cfg, {{"dropout", "1.5"}}), ConfigError);
  EXPECT_EQ(to_json(train_config_from_json(to_json(cfg))), to_json(cfg));
}

TEST(Report, JsonRoundTripAndConsistency) {
  const auto c = corpus(2);
  TrainConfig cfg = quick_config();
  cfg.epochs = 2;
  const RunReport r = run_cv(c.records, c.store, cfg);
  const Json j = Json::parse(to_json(r).dump());
  const RunReport back = run_report_from_json(j);
  EXPECT_EQ(to_json(back), to_json(r));
  for (const auto& f : back.folds) {
    EXPECT_EQ(f.confusion.total(), f.test_size);
    EXPECT_EQ(f.epoch_loss.size(), 2u);
  }
  const std::string loss = loss_csv(r);
  EXPECT_EQ(std::count(loss.begin(), loss.end(), '\n'), 1 + 5 * 2 * 2);
  const std::string conf = confusion_csv(r.folds[0].confusion);
  EXPECT_EQ(conf.substr(0, conf.find('\n')), "true\\predicted,neutral,happy,sad,angry");
}

}  // namespace
}  // namespace sertl
