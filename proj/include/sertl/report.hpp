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

// Config snapshots, run reports and plot-ready CSV files.
//
// CSV files (comma separated, one header row):
//   confusion_fold<k>.csv  true\predicted,neutral,happy,sad,angry
//   loss.csv               fold,epoch,step,loss            (one row per batch)
//   scaling.csv            size,per_class,mean_ua,mean_wa,fold1_ua,...,fold5_ua
// Numbers are written with 17 significant digits; a size of "full" means no
// subsampling, and folds that were not run or failed leave their cell empty.

#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sertl/training.hpp"

namespace sertl {

using Json = nlohmann::json;

inline constexpr std::string_view kReportFormat = "sertl.run_report.v1";
inline constexpr std::string_view kInitScheme = "glorot_uniform weights, zero biases, LSTM forget-gate bias 1";

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// TrainConfig <-> JSON

inline Json to_json(const ModelSpec& s) {
  return {{"kind", to_string(s.kind)},       {"input_dim", s.input_dim},   {"text_dim", s.text_dim},
          {"num_classes", s.num_classes},    {"mlp_hidden", s.mlp_hidden}, {"rnn_hidden", s.rnn_hidden},
          {"dropout", s.dropout}};
}

inline Json to_json(const TrainConfig& c) {
  return {{"model", to_json(c.model)},
          {"features", to_string(c.features)},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"eps", c.adam.eps},
          {"seed", c.seed},
          {"per_class", c.per_class_limit ? Json(*c.per_class_limit) : Json(nullptr)},
          {"crop_s", c.crop_s},
          {"clip_norm", c.clip_norm},
          {"folds", c.folds},
          {"threads", c.threads},
          {"init", kInitScheme}};
}

namespace detail {

template <typename F>
auto json_field(const Json& j, const char* key, F&& read) {
  try {
    return read(j.at(key));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline ModelSpec model_spec_from_json(const Json& j) {
  ModelSpec s;
  s.kind = parse_model_kind(detail::json_field(j, "kind", [](const Json& v) { return v.get<std::string>(); }));
  s.input_dim = detail::json_field(j, "input_dim", [](const Json& v) { return v.get<std::size_t>(); });
  s.text_dim = detail::json_field(j, "text_dim", [](const Json& v) { return v.get<std::size_t>(); });
  s.num_classes = detail::json_field(j, "num_classes", [](const Json& v) { return v.get<std::size_t>(); });
  s.mlp_hidden =
      detail::json_field(j, "mlp_hidden", [](const Json& v) { return v.get<std::vector<std::size_t>>(); });
  s.rnn_hidden = detail::json_field(j, "rnn_hidden", [](const Json& v) { return v.get<std::size_t>(); });
  s.dropout = detail::json_field(j, "dropout", [](const Json& v) { return v.get<double>(); });
  return s;
}

inline TrainConfig train_config_from_json(const Json& j) {
  using detail::json_field;
  TrainConfig c;
  c.model = json_field(j, "model", [](const Json& v) { return model_spec_from_json(v); });
  c.features = parse_source_kind(json_field(j, "features", [](const Json& v) { return v.get<std::string>(); }));
  c.batch_size = json_field(j, "batch_size", [](const Json& v) { return v.get<std::size_t>(); });
  c.epochs = json_field(j, "epochs", [](const Json& v) { return v.get<std::size_t>(); });
  c.adam.lr = json_field(j, "lr", [](const Json& v) { return v.get<double>(); });
  c.adam.beta1 = json_field(j, "beta1", [](const Json& v) { return v.get<double>(); });
  c.adam.beta2 = json_field(j, "beta2", [](const Json& v) { return v.get<double>(); });
  c.adam.eps = json_field(j, "eps", [](const Json& v) { return v.get<double>(); });
  c.seed = json_field(j, "seed", [](const Json& v) { return v.get<std::uint64_t>(); });
  c.per_class_limit = json_field(j, "per_class", [](const Json& v) {
    return v.is_null() ? std::nullopt : std::optional<std::size_t>(v.get<std::size_t>());
  });
  c.crop_s = json_field(j, "crop_s", [](const Json& v) { return v.get<double>(); });
  c.clip_norm = json_field(j, "clip_norm", [](const Json& v) { return v.get<double>(); });
  c.folds = json_field(j, "folds", [](const Json& v) { return v.get<std::vector<int>>(); });
  c.threads = json_field(j, "threads", [](const Json& v) { return v.get<std::size_t>(); });
  validate(c);
  return c;
}

// ---------------------------------------------------------------------------
// key=value overrides

inline const std::vector<std::string>& override_keys() {
  static const std::vector<std::string> keys = {
      "model",     "features", "batch_size", "epochs",    "lr",         "beta1",      "beta2",    "eps",
      "seed",      "per_class", "crop_s",    "clip_norm", "folds",      "threads",    "dropout",  "mlp_hidden",
      "rnn_hidden"};
  return keys;
}

namespace detail {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError("--set " + std::string(key) + ": cannot parse '" + std::string(text) + "'");
  }
  return value;
}

template <typename T>
std::vector<T> parse_list(std::string_view key, std::string_view text) {
  std::vector<T> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::size_t stop = comma == std::string_view::npos ? text.size() : comma;
    out.push_back(parse_number<T>(key, text.substr(start, stop - start)));
    if (comma == std::string_view::npos) {
      break;
    }
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

/// Applies key=value overrides. Every key is checked before anything
/// changes. "model" and "features" are applied first and reset the input
/// width (and default MLP widths); the other keys follow in order.
inline void apply_overrides(TrainConfig& target, const std::vector<std::pair<std::string, std::string>>& overrides) {
  TrainConfig cfg = target;
  const auto& keys = override_keys();
  for (const auto& [k, v] : overrides) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      throw ConfigError("unknown setting '" + k + "'");
    }
  }
  bool reshape = false;
  for (const auto& [k, v] : overrides) {
    if (k == "model") {
      cfg.model.kind = parse_model_kind(v);
      reshape = true;
    } else if (k == "features") {
      cfg.features = parse_source_kind(v);
      reshape = true;
    }
  }
  if (reshape) {
    cfg.model.input_dim = feature_dim(cfg.features);
    cfg.model.mlp_hidden =
        cfg.model.kind == ModelKind::kMlpPool ? default_mlp_hidden(cfg.model.input_dim) : std::vector<std::size_t>{};
  }
  using detail::parse_list;
  using detail::parse_number;
  for (const auto& [k, v] : overrides) {
    if (k == "batch_size") {
      cfg.batch_size = parse_number<std::size_t>(k, v);
    } else if (k == "epochs") {
      cfg.epochs = parse_number<std::size_t>(k, v);
    } else if (k == "lr") {
      cfg.adam.lr = parse_number<double>(k, v);
    } else if (k == "beta1") {
      cfg.adam.beta1 = parse_number<double>(k, v);
    } else if (k == "beta2") {
      cfg.adam.beta2 = parse_number<double>(k, v);
    } else if (k == "eps") {
      cfg.adam.eps = parse_number<double>(k, v);
    } else if (k == "seed") {
      cfg.seed = parse_number<std::uint64_t>(k, v);
    } else if (k == "per_class") {
      cfg.per_class_limit = v == "none" || v == "full" ? std::nullopt
                                                       : std::optional<std::size_t>(parse_number<std::size_t>(k, v));
    } else if (k == "crop_s") {
      cfg.crop_s = parse_number<double>(k, v);
    } else if (k == "clip_norm") {
      cfg.clip_norm = parse_number<double>(k, v);
    } else if (k == "folds") {
      cfg.folds = v.empty() || v == "all" ? std::vector<int>{} : parse_list<int>(k, v);
    } else if (k == "threads") {
      cfg.threads = parse_number<std::size_t>(k, v);
    } else if (k == "dropout") {
      cfg.model.dropout = parse_number<double>(k, v);
    } else if (k == "mlp_hidden") {
      cfg.model.mlp_hidden = parse_list<std::size_t>(k, v);
    } else if (k == "rnn_hidden") {
      cfg.model.rnn_hidden = parse_number<std::size_t>(k, v);
    }
  }
  validate(cfg);
  target = std::move(cfg);
}

// ---------------------------------------------------------------------------
// RunReport <-> JSON

inline Json to_json(const Confusion& c) {
  Json rows = Json::array();
  for (const auto& row : c.counts) {
    rows.push_back(row);
  }
  return rows;
}

inline Json to_json(const FoldReport& f) {
  return {{"fold", f.fold},
          {"test_session", f.test_session},
          {"train_size", f.train_size},
          {"test_size", f.test_size},
          {"confusion", to_json(f.confusion)},
          {"ua", f.ua},
          {"wa", f.wa},
          {"epoch_loss", f.epoch_loss},
          {"steps", f.steps},
          {"error", f.ok() ? Json(nullptr) : Json(f.error)}};
}

inline Json to_json(const RunReport& r) {
  Json folds = Json::array();
  std::size_t ok = 0;
  for (const auto& f : r.folds) {
    folds.push_back(to_json(f));
    ok += f.ok() ? 1 : 0;
  }
  return {{"format", kReportFormat},
          {"config", to_json(r.config)},
          {"seed", r.config.seed},
          {"folds", folds},
          {"aggregate",
           {{"mean_ua", r.mean_ua}, {"mean_wa", r.mean_wa}, {"folds_ok", ok}, {"folds_failed", r.folds.size() - ok}}},
          {"wall_time_s", r.wall_time_s}};
}

/// Inverse of to_json; per-batch losses are not part of the JSON document.
inline RunReport run_report_from_json(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != kReportFormat) {
      throw DataError("not a " + std::string(kReportFormat) + " document");
    }
    RunReport r;
    r.config = train_config_from_json(j.at("config"));
    for (const auto& fj : j.at("folds")) {
      FoldReport f;
      f.fold = fj.at("fold").get<int>();
      f.test_session = fj.at("test_session").get<int>();
      f.train_size = fj.at("train_size").get<std::size_t>();
      f.test_size = fj.at("test_size").get<std::size_t>();
      const auto rows = fj.at("confusion").get<std::vector<std::vector<std::uint64_t>>>();
      if (rows.size() != kNumClasses) {
        throw DataError("confusion matrix must be 4x4");
      }
      for (std::size_t a = 0; a < kNumClasses; ++a) {
        if (rows[a].size() != kNumClasses) {
          throw DataError("confusion matrix must be 4x4");
        }
        for (std::size_t b = 0; b < kNumClasses; ++b) {
          f.confusion.counts[a][b] = rows[a][b];
        }
      }
      f.ua = fj.at("ua").get<double>();
      f.wa = fj.at("wa").get<double>();
      f.epoch_loss = fj.at("epoch_loss").get<std::vector<double>>();
      f.steps = fj.at("steps").get<std::size_t>();
      f.error = fj.at("error").is_null() ? std::string{} : fj.at("error").get<std::string>();
      r.folds.push_back(std::move(f));
    }
    r.mean_ua = j.at("aggregate").at("mean_ua").get<double>();
    r.mean_wa = j.at("aggregate").at("mean_wa").get<double>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("run report: ") + e.what());
  }
}

/// Equality of everything a run computes; wall time is excluded.
inline bool same_results(const RunReport& a, const RunReport& b) {
  if (to_json(a.config) != to_json(b.config) || a.folds.size() != b.folds.size() || a.mean_ua != b.mean_ua ||
      a.mean_wa != b.mean_wa) {
    return false;
  }
  for (std::size_t i = 0; i < a.folds.size(); ++i) {
    const FoldReport& x = a.folds[i];
    const FoldReport& y = b.folds[i];
    if (x.fold != y.fold || x.test_session != y.test_session || x.train_size != y.train_size ||
        x.test_size != y.test_size || !(x.confusion == y.confusion) || x.ua != y.ua || x.wa != y.wa ||
        x.epoch_loss != y.epoch_loss || x.batch_loss != y.batch_loss || x.error != y.error) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Files

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out || !(out << text)) {
    throw IoError("cannot write " + path.string());
  }
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string confusion_csv(const Confusion& c) {
  std::string out = "true\\predicted";
  for (Emotion e : kEmotions) {
    out += "," + std::string(to_string(e));
  }
  out += "\n";
  for (std::size_t a = 0; a < kNumClasses; ++a) {
    out += std::string(to_string(kEmotions[a]));
    for (std::size_t b = 0; b < kNumClasses; ++b) {
      out += "," + std::to_string(c.counts[a][b]);
    }
    out += "\n";
  }
  return out;
}

inline std::string loss_csv(const RunReport& r) {
  std::string out = "fold,epoch,step,loss\n";
  for (const auto& f : r.folds) {
    if (f.epoch_loss.empty()) {
      continue;
    }
    const std::size_t per_epoch = f.batch_loss.size() / f.epoch_loss.size();
    for (std::size_t i = 0; i < f.batch_loss.size(); ++i) {
      out += std::to_string(f.fold) + "," + std::to_string(i / per_epoch + 1) + "," + std::to_string(i + 1) + "," +
             fmt_double(f.batch_loss[i]) + "\n";
    }
  }
  return out;
}

inline constexpr std::string_view kScalingHeader =
    "size,per_class,mean_ua,mean_wa,fold1_ua,fold2_ua,fold3_ua,fold4_ua,fold5_ua";

inline std::string scaling_csv(const std::vector<ScalingPoint>& points) {
  std::string out = std::string(kScalingHeader) + "\n";
  for (const auto& p : points) {
    out += p.size == 0 ? std::string("full,full") : std::to_string(p.size) + "," + std::to_string(p.size / kNumClasses);
    out += "," + fmt_double(p.report.mean_ua) + "," + fmt_double(p.report.mean_wa);
    for (int k = 1; k <= kNumSessions; ++k) {
      out += ",";
      for (const auto& f : p.report.folds) {
        if (f.fold == k && f.ok()) {
          out += fmt_double(f.ua);
        }
      }
    }
    out += "\n";
  }
  return out;
}

/// report.json, loss.csv and confusion_fold<k>.csv under `dir`.
inline void write_run(const RunReport& r, const std::filesystem::path& dir) {
  write_text(dir / "report.json", to_json(r).dump(2) + "\n");
  write_text(dir / "loss.csv", loss_csv(r));
  for (const auto& f : r.folds) {
    if (f.ok()) {
      write_text(dir / ("confusion_fold" + std::to_string(f.fold) + ".csv"), confusion_csv(f.confusion));
    }
  }
}

/// Human-readable summary: one line per fold, then the aggregate row.
inline void print_summary(std::ostream& os, const RunReport& r) {
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %-8s %5s %6s %6s %8s\n", "model", "features", "fold", "UA", "WA", "train");
  os << line;
  const std::string model(to_string(r.config.model.kind));
  const std::string feats(to_string(r.config.features));
  for (const auto& f : r.folds) {
    if (f.ok()) {
      std::snprintf(line, sizeof line, "%-16s %-8s %5d %5.1f%% %5.1f%% %8zu\n", model.c_str(), feats.c_str(), f.fold,
                    100.0 * f.ua, 100.0 * f.wa, f.train_size);
    } else {
      std::snprintf(line, sizeof line, "%-16s %-8s %5d FAILED: ", model.c_str(), feats.c_str(), f.fold);
    }
    os << line;
    if (!f.ok()) {
      os << f.error << "\n";
    }
  }
  std::snprintf(line, sizeof line, "%-16s %-8s %5s %5.1f%% %5.1f%%\n", model.c_str(), feats.c_str(), "mean",
                100.0 * r.mean_ua, 100.0 * r.mean_wa);
  os << line;
}

}  // namespace sertl
