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

// Training loop, evaluation and the leave-one-session-out experiment
// runners.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "sertl/dataset.hpp"
#include "sertl/feature_store.hpp"
#include "sertl/metrics.hpp"
#include "sertl/models.hpp"
#include "sertl/ops.hpp"
#include "sertl/optimizer.hpp"

namespace sertl {

struct TrainConfig {
  ModelSpec model = make_spec(ModelKind::kMlpPool, kWav2vecDim);
  SourceKind features = SourceKind::kWav2vec;
  std::size_t batch_size = 16;
  std::size_t epochs = 100;
  AdamOptions adam;
  std::uint64_t seed = 0;
  std::optional<std::size_t> per_class_limit;
  double crop_s = 5.0;
  /// Global gradient-norm bound, applied to recurrent models only.
  double clip_norm = 5.0;
  /// 1-based folds to run; empty runs all five.
  std::vector<int> folds;
  /// Folds trained concurrently. Results do not depend on it.
  std::size_t threads = 1;
};

inline void validate(const TrainConfig& cfg) {
  validate(cfg.model);
  if (cfg.features == SourceKind::kBert) {
    throw ConfigError("acoustic features must be lld or wav2vec");
  }
  if (cfg.model.input_dim != feature_dim(cfg.features)) {
    throw ConfigError("model input_dim " + std::to_string(cfg.model.input_dim) + " does not match " +
                      std::string(to_string(cfg.features)) + " features (" +
                      std::to_string(feature_dim(cfg.features)) + ")");
  }
  if (cfg.model.bimodal() && cfg.model.text_dim != kBertDim) {
    throw ConfigError("bimodal text_dim must be " + std::to_string(kBertDim));
  }
  if (cfg.batch_size == 0) {
    throw ConfigError("batch_size must be positive");
  }
  if (!(cfg.adam.lr > 0.0) || !(cfg.adam.beta1 >= 0.0 && cfg.adam.beta1 < 1.0) ||
      !(cfg.adam.beta2 >= 0.0 && cfg.adam.beta2 < 1.0) || !(cfg.adam.eps > 0.0)) {
    throw ConfigError("invalid Adam settings");
  }
  if (!(cfg.crop_s > 0.0)) {
    throw ConfigError("crop_s must be positive");
  }
  if (!(cfg.clip_norm > 0.0)) {
    throw ConfigError("clip_norm must be positive");
  }
  if (cfg.per_class_limit && *cfg.per_class_limit == 0) {
    throw ConfigError("per_class_limit must be positive");
  }
  std::set<int> seen;
  for (int f : cfg.folds) {
    if (f < 1 || f > kNumSessions || !seen.insert(f).second) {
      throw ConfigError("folds must be distinct values in 1..5");
    }
  }
  if (cfg.threads == 0) {
    throw ConfigError("threads must be at least 1");
  }
}

/// Model inputs for one utterance: cropped acoustic frames, plus token
/// embeddings for bimodal models.
struct Example {
  Matrix audio;
  std::optional<Matrix> text;
};

/// Loads examples on first use and keeps them while the cache budget lasts.
/// Safe to share between fold threads.
class ExampleSource {
 public:
  ExampleSource(std::span<const UtteranceRecord> records, const FeatureStore& store, SourceKind audio_kind,
                bool with_text, double crop_s, std::size_t cache_bytes = std::size_t{4} << 30)
      : records_(records),
        store_(&store),
        audio_kind_(audio_kind),
        with_text_(with_text),
        crop_s_(crop_s),
        cache_budget_(cache_bytes),
        cache_(records.size()) {}

  std::span<const UtteranceRecord> records() const noexcept { return records_; }
  int label(std::size_t index) const { return static_cast<int>(records_[index].label); }

  /// Throws DataError listing utterances whose features are missing.
  void check_available(std::span<const std::size_t> indices) const {
    std::vector<std::string> missing;
    for (std::size_t i : indices) {
      const std::string& id = records_[i].id;
      if (!store_->contains(id, audio_kind_)) {
        missing.push_back(id + " (" + std::string(to_string(audio_kind_)) + ")");
      } else if (with_text_ && !store_->contains(id, SourceKind::kBert)) {
        missing.push_back(id + " (bert)");
      }
    }
    if (!missing.empty()) {
      std::string msg = std::to_string(missing.size()) + " utterance(s) lack embeddings: ";
      for (std::size_t i = 0; i < std::min<std::size_t>(missing.size(), 5); ++i) {
        msg += (i ? ", " : "") + missing[i];
      }
      if (missing.size() > 5) {
        msg += ", ...";
      }
      throw DataError(msg);
    }
  }

  std::shared_ptr<const Example> get(std::size_t index) const {
    {
      std::lock_guard lock(mutex_);
      if (cache_[index]) {
        return cache_[index];
      }
    }
    const std::string& id = records_[index].id;
    auto ex = std::make_shared<Example>();
    FrameSequence audio = store_->load(id, audio_kind_);
    validate(audio);
    ex->audio = audio.frame_hop_ms > 0.0 ? crop_frames(audio, crop_s_).frames : std::move(audio.frames);
    if (with_text_) {
      FrameSequence text = store_->load(id, SourceKind::kBert);
      if (text.length() == 0) {
        throw DataError("utterance '" + id + "': empty transcript embedding");
      }
      validate(text);
      ex->text = std::move(text.frames);
    }
    const std::size_t bytes = 8 * (ex->audio.size() + (ex->text ? ex->text->size() : 0));
    std::lock_guard lock(mutex_);
    if (!cache_[index] && cache_used_ + bytes <= cache_budget_) {
      cache_[index] = ex;
      cache_used_ += bytes;
    }
    return cache_[index] ? cache_[index] : ex;
  }

 private:
  std::span<const UtteranceRecord> records_;
  const FeatureStore* store_;
  SourceKind audio_kind_;
  bool with_text_;
  double crop_s_;
  std::size_t cache_budget_;
  mutable std::mutex mutex_;
  mutable std::vector<std::shared_ptr<const Example>> cache_;
  mutable std::size_t cache_used_ = 0;
};

inline Batch assemble(const ExampleSource& source, std::span<const std::size_t> indices,
                      std::vector<std::shared_ptr<const Example>>& hold) {
  hold.clear();
  std::vector<const Matrix*> audio;
  std::vector<const Matrix*> text;
  for (std::size_t i : indices) {
    hold.push_back(source.get(i));
    audio.push_back(&hold.back()->audio);
    if (hold.back()->text) {
      text.push_back(&*hold.back()->text);
    }
  }
  return make_batch(audio, text);
}

struct TrainResult {
  Model model;
  /// One entry per optimizer step.
  std::vector<double> batch_loss;
  /// Mean batch loss of each epoch.
  std::vector<double> epoch_loss;
  /// Sorted record indices that appeared in any training batch.
  std::vector<std::size_t> trained;
};

/// Runs exactly cfg.epochs epochs of seeded shuffled mini-batches and
/// returns the final parameters.
inline TrainResult train_one(const ExampleSource& source, std::span<const std::size_t> train, const TrainConfig& cfg,
                             std::uint64_t seed) {
  if (train.empty()) {
    throw DataError("train_one: empty training set");
  }
  Rng rng(seed);
  TrainResult result{Model(cfg.model, rng), {}, {}, {}};
  Model& model = result.model;
  std::vector<std::size_t> order(train.begin(), train.end());
  std::vector<std::shared_ptr<const Example>> hold;
  std::vector<int> labels;
  std::set<std::size_t> trained;
  const std::size_t steps = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
  result.batch_loss.reserve(cfg.epochs * steps);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(cfg.batch_size, order.size() - start));
      labels.clear();
      for (std::size_t i : idx) {
        labels.push_back(source.label(i));
        trained.insert(i);
      }
      const Batch batch = assemble(source, idx, hold);
      Tape tape;
      const HeadOutput out = model.forward(tape, batch, true, rng);
      const SoftmaxXent xent = softmax_xent(tape, out.logits, labels);
      const double loss = tape.value(xent.loss)[0];
      tape.backward(xent.loss);
      if (cfg.model.recurrent()) {
        model.params().clip_grad_norm(cfg.clip_norm);
      }
      adam_step(model.params(), cfg.adam);
      result.batch_loss.push_back(loss);
      sum += loss;
    }
    result.epoch_loss.push_back(sum / static_cast<double>(steps));
  }
  result.trained.assign(trained.begin(), trained.end());
  return result;
}

struct Evaluation {
  Confusion confusion;
  double ua = 0.0;
  double wa = 0.0;
  std::vector<int> predictions;
};

inline int argmax_row(const Matrix& m, std::size_t r) {
  const auto row = m.row(r);
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

inline Evaluation evaluate(Model& model, const ExampleSource& source, std::span<const std::size_t> test,
                           std::size_t batch_size = 16) {
  Evaluation ev;
  std::vector<std::shared_ptr<const Example>> hold;
  for (std::size_t start = 0; start < test.size(); start += batch_size) {
    const auto idx = test.subspan(start, std::min(batch_size, test.size() - start));
    const Matrix logits = model.logits(assemble(source, idx, hold));
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const int p = argmax_row(logits, b);
      ev.predictions.push_back(p);
      ev.confusion.add(source.label(idx[b]), p);
    }
  }
  ev.ua = unweighted_accuracy(ev.confusion);
  ev.wa = weighted_accuracy(ev.confusion);
  return ev;
}

struct FoldReport {
  int fold = 0;
  int test_session = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  Confusion confusion;
  double ua = 0.0;
  double wa = 0.0;
  std::vector<double> epoch_loss;
  std::vector<double> batch_loss;
  /// Optimizer steps taken; serialized reports keep this but not batch_loss.
  std::size_t steps = 0;
  /// Empty when the fold completed.
  std::string error;

  bool ok() const noexcept { return error.empty(); }
};

struct RunReport {
  TrainConfig config;
  std::vector<FoldReport> folds;
  /// Means over completed folds.
  double mean_ua = 0.0;
  double mean_wa = 0.0;
  double wall_time_s = 0.0;

  bool ok() const noexcept {
    return !folds.empty() && std::all_of(folds.begin(), folds.end(), [](const FoldReport& f) { return f.ok(); });
  }
};

inline void aggregate(RunReport& report) {
  double ua = 0.0;
  double wa = 0.0;
  std::size_t n = 0;
  for (const auto& f : report.folds) {
    if (f.ok()) {
      ua += f.ua;
      wa += f.wa;
      ++n;
    }
  }
  report.mean_ua = n ? ua / static_cast<double>(n) : 0.0;
  report.mean_wa = n ? wa / static_cast<double>(n) : 0.0;
}

namespace detail {

struct FoldJob {
  int fold = 0;
  int test_session = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline FoldReport run_fold(const ExampleSource& source, const FoldJob& job, const TrainConfig& cfg) {
  FoldReport rep;
  rep.fold = job.fold;
  rep.test_session = job.test_session;
  rep.train_size = job.train.size();
  rep.test_size = job.test.size();
  try {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(job.fold - 1);
    TrainResult trained = train_one(source, job.train, cfg, seed);
    std::vector<std::size_t> overlap;
    std::set_intersection(trained.trained.begin(), trained.trained.end(), job.test.begin(), job.test.end(),
                          std::back_inserter(overlap));
    if (!overlap.empty()) {
      throw StateError("fold " + std::to_string(job.fold) + ": test utterance '" +
                       source.records()[overlap.front()].id + "' was used for training");
    }
    const Evaluation ev = evaluate(trained.model, source, job.test, cfg.batch_size);
    rep.confusion = ev.confusion;
    rep.ua = ev.ua;
    rep.wa = ev.wa;
    rep.epoch_loss = std::move(trained.epoch_loss);
    rep.batch_loss = std::move(trained.batch_loss);
    rep.steps = rep.batch_loss.size();
  } catch (const std::exception& e) {
    rep.error = e.what();
  }
  return rep;
}

}  // namespace detail

/// Speaker-independent cross-validation: fold k tests on session k and
/// trains on the other four. With per_class_limit set, each fold trains on
/// a balanced subsample of its training sessions drawn with seed + k - 1.
inline RunReport run_cv(std::span<const UtteranceRecord> records, const FeatureStore& store, const TrainConfig& cfg) {
  validate(cfg);
  const auto started = std::chrono::steady_clock::now();
  const FoldPlan plan = make_folds(records);
  std::vector<int> fold_ids = cfg.folds;
  if (fold_ids.empty()) {
    for (int k = 1; k <= kNumSessions; ++k) {
      fold_ids.push_back(k);
    }
  }
  std::sort(fold_ids.begin(), fold_ids.end());

  std::vector<detail::FoldJob> jobs;
  std::set<std::size_t> needed;
  for (int k : fold_ids) {
    const Fold& fold = plan.folds[static_cast<std::size_t>(k - 1)];
    FoldSplit split = split_records(records, fold);
    detail::FoldJob job{k, fold.test_session, std::move(split.train), std::move(split.test)};
    if (cfg.per_class_limit) {
      job.train = subsample_balanced(records, job.train, *cfg.per_class_limit,
                                     cfg.seed + static_cast<std::uint64_t>(k - 1));
    }
    std::set<std::string> test_ids;
    for (std::size_t i : job.test) {
      test_ids.insert(records[i].id);
    }
    for (std::size_t i : job.train) {
      if (test_ids.contains(records[i].id)) {
        throw StateError("fold " + std::to_string(k) + ": utterance '" + records[i].id +
                         "' is in both the training and the test set");
      }
    }
    needed.insert(job.train.begin(), job.train.end());
    needed.insert(job.test.begin(), job.test.end());
    jobs.push_back(std::move(job));
  }

  ExampleSource source(records, store, cfg.features, cfg.model.bimodal(), cfg.crop_s);
  const std::vector<std::size_t> needed_list(needed.begin(), needed.end());
  source.check_available(needed_list);

  RunReport report;
  report.config = cfg;
  report.folds.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      report.folds[i] = detail::run_fold(source, jobs[i], cfg);
    }
  };
  const std::size_t workers = std::min(cfg.threads, jobs.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back(worker);
    }
  }
  aggregate(report);
  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

struct ScalingPoint {
  /// Training utterances per fold; 0 means all available.
  std::size_t size = 0;
  RunReport report;
};

/// One cross-validation run per training-set size, balanced across the four
/// classes (size / 4 each). Subsets are nested because every size draws
/// from the same seeded per-class permutation.
inline std::vector<ScalingPoint> run_scaling_curve(std::span<const UtteranceRecord> records, const FeatureStore& store,
                                                   const TrainConfig& cfg, const std::vector<std::size_t>& sizes) {
  if (sizes.empty()) {
    throw ConfigError("scaling: no sizes given");
  }
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const std::size_t s = sizes[i];
    if (s == 0) {
      if (i + 1 != sizes.size()) {
        throw ConfigError("scaling: 'full' must be the last size");
      }
      continue;
    }
    if (s % kNumClasses != 0) {
      throw ConfigError("scaling: size " + std::to_string(s) + " is not a multiple of 4");
    }
    if (i > 0 && sizes[i - 1] >= s) {
      throw ConfigError("scaling: sizes must be strictly ascending");
    }
  }
  std::vector<ScalingPoint> out;
  for (std::size_t s : sizes) {
    TrainConfig point = cfg;
    point.per_class_limit = s == 0 ? std::nullopt : std::optional<std::size_t>(s / kNumClasses);
    out.push_back({s, run_cv(records, store, point)});
  }
  return out;
}

}  // namespace sertl
