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

// sertl: feature extraction, cross-validated training and scaling curves.
// Exit status: 0 on success, 1 when any fold or extraction unit failed,
// 2 on usage, configuration or input errors.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sertl/audio.hpp"
#include "sertl/dataset.hpp"
#include "sertl/emb_io.hpp"
#include "sertl/feature_store.hpp"
#include "sertl/lld.hpp"
#include "sertl/report.hpp"
#include "sertl/synthetic.hpp"
#include "sertl/training.hpp"

namespace fs = std::filesystem;

namespace sertl::cli {

constexpr int kFailed = 1;
constexpr int kUsage = 2;

struct RunOptions {
  std::string manifest;
  std::string emb_root;
  std::string out;
  std::string config;
  std::optional<std::string> model;
  std::optional<std::string> features;
  std::optional<std::string> per_class;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> dropout;
  std::vector<std::string> sets;
  std::string sizes;
};

void add_run_flags(CLI::App& cmd, RunOptions& o) {
  cmd.add_option("--manifest", o.manifest, "JSON-lines manifest");
  cmd.add_option("--emb-root", o.emb_root, "directory holding <kind>/<id>.emb1");
  cmd.add_option("--out", o.out, "output directory")->required();
  cmd.add_option("--config", o.config, "start from a config.json snapshot of an earlier run");
  cmd.add_option("--model", o.model, "mean_pool | mean_max_pool | attention_pool | mlp_pool | bimodal_align");
  cmd.add_option("--features", o.features, "lld | wav2vec");
  cmd.add_option("--per-class", o.per_class, "training utterances per class, or 'full'");
  cmd.add_option("--seed", o.seed);
  cmd.add_option("--epochs", o.epochs);
  cmd.add_option("--dropout", o.dropout);
  cmd.add_option("--set", o.sets, "key=value override, repeatable");
}

std::string json_number(double v) { return Json(v).dump(); }

/// Resolves the training config: snapshot (if any), then flags, then --set.
TrainConfig resolve_config(RunOptions& o) {
  TrainConfig cfg;
  if (!o.config.empty()) {
    const Json snap = Json::parse(read_text(o.config));
    cfg = train_config_from_json(snap.contains("train") ? snap.at("train") : snap);
    if (o.manifest.empty() && snap.contains("manifest")) {
      o.manifest = snap.at("manifest").get<std::string>();
    }
    if (o.emb_root.empty() && snap.contains("emb_root")) {
      o.emb_root = snap.at("emb_root").get<std::string>();
    }
    if (o.sizes.empty() && snap.contains("sizes")) {
      o.sizes = snap.at("sizes").get<std::string>();
    }
  }
  std::vector<std::pair<std::string, std::string>> overrides;
  if (o.model) overrides.emplace_back("model", *o.model);
  if (o.features) overrides.emplace_back("features", *o.features);
  if (o.per_class) overrides.emplace_back("per_class", *o.per_class);
  if (o.seed) overrides.emplace_back("seed", std::to_string(*o.seed));
  if (o.epochs) overrides.emplace_back("epochs", std::to_string(*o.epochs));
  if (o.dropout) overrides.emplace_back("dropout", json_number(*o.dropout));
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--set expects key=value, got '" + s + "'");
    }
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  apply_overrides(cfg, overrides);
  if (o.manifest.empty() || o.emb_root.empty()) {
    throw ConfigError("--manifest and --emb-root are required (directly or through --config)");
  }
  return cfg;
}

void write_snapshot(const std::string& command, const RunOptions& o, const TrainConfig& cfg) {
  Json snap = {{"command", command},
               {"manifest", fs::absolute(o.manifest).string()},
               {"emb_root", fs::absolute(o.emb_root).string()},
               {"train", to_json(cfg)}};
  if (!o.sizes.empty()) {
    snap["sizes"] = o.sizes;
  }
  write_text(fs::path(o.out) / "config.json", snap.dump(2) + "\n");
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> sizes;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (item == "full") {
      sizes.push_back(0);
    } else {
      std::size_t used = 0;
      unsigned long v = 0;
      try {
        v = std::stoul(item, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (item.empty() || used != item.size() || v == 0) {
        throw ConfigError("--sizes: expected positive integers or 'full', got '" + item + "'");
      }
      sizes.push_back(v);
    }
    if (comma == std::string::npos) {
      break;
    }
    start = comma + 1;
  }
  return sizes;
}

int train_cv(RunOptions& o) {
  const TrainConfig cfg = resolve_config(o);
  const auto records = load_manifest(o.manifest).records;
  const DirectoryFeatureStore store(o.emb_root);
  write_snapshot("train-cv", o, cfg);
  const RunReport report = run_cv(records, store, cfg);
  write_run(report, o.out);
  print_summary(std::cout, report);
  return report.ok() ? 0 : kFailed;
}

int scaling(RunOptions& o) {
  const TrainConfig cfg = resolve_config(o);
  if (o.sizes.empty()) {
    throw ConfigError("--sizes is required");
  }
  const auto sizes = parse_sizes(o.sizes);
  const auto records = load_manifest(o.manifest).records;
  const DirectoryFeatureStore store(o.emb_root);
  write_snapshot("scaling", o, cfg);
  const auto points = run_scaling_curve(records, store, cfg, sizes);
  write_text(fs::path(o.out) / "scaling.csv", scaling_csv(points));
  bool ok = true;
  for (const auto& p : points) {
    const std::string label = p.size == 0 ? "full" : std::to_string(p.size);
    write_run(p.report, fs::path(o.out) / ("size_" + label));
    std::printf("size %-6s mean UA %5.1f%%  mean WA %5.1f%%%s\n", label.c_str(), 100.0 * p.report.mean_ua,
                100.0 * p.report.mean_wa, p.report.ok() ? "" : "  (fold failures)");
    ok = ok && p.report.ok();
  }
  return ok ? 0 : kFailed;
}

int extract_lld(const std::string& manifest, const std::string& out) {
  const auto records = load_manifest(manifest).records;
  const lld::Extractor extractor;
  std::size_t written = 0;
  std::vector<std::pair<std::string, std::string>> failures;
  for (const auto& r : records) {
    try {
      if (r.audio.empty()) {
        throw DataError("no audio path in manifest");
      }
      const FrameSequence seq = extractor.extract(read_wav(r.audio));
      emb::write_container(seq, emb::container_path(out, SourceKind::kLld, r.id));
      ++written;
    } catch (const std::exception& e) {
      failures.emplace_back(r.id, e.what());
    }
  }
  Json summary = {{"utterances", records.size()}, {"written", written}, {"failures", Json::array()}};
  for (const auto& [id, why] : failures) {
    summary["failures"].push_back({{"id", id}, {"error", why}});
  }
  write_text(fs::path(out) / "extract_lld_summary.json", summary.dump(2) + "\n");
  std::printf("extracted %zu of %zu utterances\n", written, records.size());
  for (const auto& [id, why] : failures) {
    std::printf("  failed %s: %s\n", id.c_str(), why.c_str());
  }
  return failures.empty() ? 0 : kFailed;
}

int inspect_emb(const std::vector<std::string>& paths) {
  bool ok = true;
  for (const auto& p : paths) {
    try {
      const emb::Inspection in = emb::inspect(p);
      std::printf("%s\n  version %u  kind %s  rows %u  cols %u  hop_ms %g  bytes %zu  length %s  crc %s\n", p.c_str(),
                  in.header.version, std::string(to_string(in.header.source_kind)).c_str(), in.header.rows,
                  in.header.cols, static_cast<double>(in.header.frame_hop_ms), in.file_bytes,
                  in.length_ok ? "ok" : "MISMATCH", in.length_ok ? (in.crc_ok ? "ok" : "MISMATCH") : "unchecked");
      ok = ok && in.length_ok && in.crc_ok;
    } catch (const Error& e) {
      std::printf("%s\n  invalid: %s\n", p.c_str(), e.what());
      ok = false;
    }
  }
  return ok ? 0 : kFailed;
}

int main(int argc, char** argv) {
  CLI::App app{"speech emotion recognition toolkit"};
  app.require_subcommand(1);

  RunOptions train_opts;
  auto* train_cmd = app.add_subcommand("train-cv", "leave-one-session-out cross-validation");
  add_run_flags(*train_cmd, train_opts);

  RunOptions scale_opts;
  auto* scale_cmd = app.add_subcommand("scaling", "UA as a function of training-set size");
  add_run_flags(*scale_cmd, scale_opts);
  scale_cmd->add_option("--sizes", scale_opts.sizes, "ascending sizes, e.g. 500,1000,full");

  std::string ex_manifest;
  std::string ex_out;
  auto* extract_cmd = app.add_subcommand("extract-lld", "write 34-dim LLD containers for every utterance");
  extract_cmd->add_option("--manifest", ex_manifest)->required();
  extract_cmd->add_option("--out", ex_out, "embedding root; files go to <out>/lld")->required();

  std::vector<std::string> inspect_paths;
  auto* inspect_cmd = app.add_subcommand("inspect-emb", "print EMB1 headers and integrity");
  inspect_cmd->add_option("files", inspect_paths)->required();

  SyntheticOptions syn;
  std::string syn_out;
  std::string syn_kind = "lld";
  auto* synth_cmd = app.add_subcommand("make-synthetic", "write a synthetic manifest and embeddings");
  synth_cmd->add_option("--out", syn_out)->required();
  synth_cmd->add_option("--features", syn_kind, "lld | wav2vec");
  synth_cmd->add_option("--per-session-class", syn.per_session_class);
  synth_cmd->add_option("--separation", syn.separation);
  synth_cmd->add_option("--noise", syn.noise);
  synth_cmd->add_option("--speaker-shift", syn.speaker_shift);
  synth_cmd->add_option("--min-len", syn.min_len);
  synth_cmd->add_option("--max-len", syn.max_len);
  synth_cmd->add_flag("--with-text", syn.with_text, "also write bert token embeddings");
  synth_cmd->add_option("--seed", syn.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      return train_cv(train_opts);
    }
    if (*scale_cmd) {
      return scaling(scale_opts);
    }
    if (*extract_cmd) {
      return extract_lld(ex_manifest, ex_out);
    }
    if (*inspect_cmd) {
      return inspect_emb(inspect_paths);
    }
    syn.kind = parse_source_kind(syn_kind);
    const SyntheticCorpus corpus = make_synthetic(syn);
    write_synthetic(corpus, syn.kind, syn.with_text, syn_out);
    std::printf("wrote %zu utterances to %s\n", corpus.records.size(), syn_out.c_str());
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  }
}

}  // namespace sertl::cli

int main(int argc, char** argv) { return sertl::cli::main(argc, argv); }
