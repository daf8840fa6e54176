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

// Utterance classifiers. Every head maps a padded batch of frame sequences
// to B x K logits:
//
//   mean_pool       masked mean over time, dense
//   mean_max_pool   [mean ; max] over time, dense
//   attention_pool  scalar score w.x_t + b per frame, softmax over time,
//                   weighted sum, dense
//   mlp_pool        per-frame MLP (dense, ReLU, dropout per layer), mean
//                   over time, dense
//   bimodal_align   audio Bi-LSTM; text projected to 2H; additive attention
//                   of each token over audio states; [text ; context] into a
//                   second Bi-LSTM; mean over tokens, dense

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sertl/emb_io.hpp"
#include "sertl/error.hpp"
#include "sertl/matrix.hpp"
#include "sertl/ops.hpp"
#include "sertl/param_store.hpp"
#include "sertl/rng.hpp"
#include "sertl/tape.hpp"

namespace sertl {

enum class ModelKind { kMeanPool, kMeanMaxPool, kAttentionPool, kMlpPool, kBimodalAlign };

inline std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kMeanPool:
      return "mean_pool";
    case ModelKind::kMeanMaxPool:
      return "mean_max_pool";
    case ModelKind::kAttentionPool:
      return "attention_pool";
    case ModelKind::kMlpPool:
      return "mlp_pool";
    case ModelKind::kBimodalAlign:
      return "bimodal_align";
  }
  return "unknown";
}

inline ModelKind parse_model_kind(std::string_view name) {
  for (ModelKind k : {ModelKind::kMeanPool, ModelKind::kMeanMaxPool, ModelKind::kAttentionPool, ModelKind::kMlpPool,
                      ModelKind::kBimodalAlign}) {
    if (name == to_string(k)) {
      return k;
    }
  }
  throw ConfigError("unknown model '" + std::string(name) +
                    "' (expected mean_pool, mean_max_pool, attention_pool, mlp_pool or bimodal_align)");
}

struct ModelSpec {
  ModelKind kind = ModelKind::kMlpPool;
  std::size_t input_dim = kWav2vecDim;
  std::size_t text_dim = kBertDim;
  std::size_t num_classes = 4;
  std::vector<std::size_t> mlp_hidden;
  std::size_t rnn_hidden = 128;
  double dropout = 0.2;

  bool recurrent() const noexcept { return kind == ModelKind::kBimodalAlign; }
  bool bimodal() const noexcept { return kind == ModelKind::kBimodalAlign; }
};

/// Default MLP widths per acoustic input: [416, 416] for the 34 LLDs,
/// [256, 256] otherwise, which keeps the two parameter counts within 5%.
inline std::vector<std::size_t> default_mlp_hidden(std::size_t input_dim) {
  return input_dim == kLldDim ? std::vector<std::size_t>{416, 416} : std::vector<std::size_t>{256, 256};
}

inline ModelSpec make_spec(ModelKind kind, std::size_t input_dim) {
  ModelSpec spec;
  spec.kind = kind;
  spec.input_dim = input_dim;
  if (kind == ModelKind::kMlpPool) {
    spec.mlp_hidden = default_mlp_hidden(input_dim);
  }
  return spec;
}

inline void validate(const ModelSpec& spec) {
  if (spec.input_dim == 0) {
    throw ConfigError("model input_dim must be positive");
  }
  if (spec.num_classes != 4) {
    throw ConfigError("num_classes must be 4, got " + std::to_string(spec.num_classes));
  }
  if ((spec.kind == ModelKind::kMlpPool) != !spec.mlp_hidden.empty()) {
    throw ConfigError("mlp_hidden must be set for mlp_pool and only for mlp_pool");
  }
  for (std::size_t w : spec.mlp_hidden) {
    if (w == 0) {
      throw ConfigError("mlp_hidden widths must be positive");
    }
  }
  if (spec.bimodal() && (spec.rnn_hidden == 0 || spec.text_dim == 0)) {
    throw ConfigError("bimodal_align needs positive rnn_hidden and text_dim");
  }
  if (!(spec.dropout >= 0.0 && spec.dropout < 1.0)) {
    throw ConfigError("dropout must be in [0, 1), got " + std::to_string(spec.dropout));
  }
}

/// Variable-length sequences padded to a common length; row b * max_len + t
/// holds step t of sequence b, padding rows are zero.
struct Packed {
  Matrix data;
  SeqLayout layout;
};

inline Packed pack(const std::vector<const Matrix*>& seqs, std::string_view what = "sequence") {
  if (seqs.empty()) {
    throw DataError("cannot batch zero sequences");
  }
  std::vector<std::size_t> lengths;
  const std::size_t cols = seqs.front()->cols();
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    if (seqs[i]->rows() == 0) {
      throw DataError(std::string(what) + " " + std::to_string(i) + " in batch is empty");
    }
    if (seqs[i]->cols() != cols) {
      throw DimensionError(std::string(what) + " " + std::to_string(i) + " has " + std::to_string(seqs[i]->cols()) +
                           " features, batch has " + std::to_string(cols));
    }
    lengths.push_back(seqs[i]->rows());
  }
  Packed p;
  p.layout = SeqLayout::from_lengths(std::move(lengths));
  p.data = Matrix(p.layout.rows(), cols);
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    std::copy_n(seqs[b]->data(), seqs[b]->size(), p.data.data() + p.layout.row(b, 0) * cols);
  }
  return p;
}

struct Batch {
  Packed audio;
  std::optional<Packed> text;
};

inline Batch make_batch(const std::vector<const Matrix*>& audio, const std::vector<const Matrix*>& text = {}) {
  Batch batch;
  batch.audio = pack(audio, "audio sequence");
  if (!text.empty()) {
    if (text.size() != audio.size()) {
      throw DimensionError("batch has " + std::to_string(audio.size()) + " audio and " + std::to_string(text.size()) +
                           " text sequences");
    }
    batch.text = pack(text, "transcript");
  }
  return batch;
}

struct HeadOutput {
  Var logits;
  /// Utterance representation fed to the classifier (before dropout).
  Var pooled;
  /// attention_pool: (B * max_len) x 1 frame weights. bimodal_align:
  /// (B * text max_len) x audio max_len alignment. Empty otherwise.
  Matrix attention;
};

class Model {
 public:
  Model(ModelSpec spec, Rng& init_rng) : spec_(std::move(spec)) {
    validate(spec_);
    build(init_rng);
  }

  Model(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    validate(spec_);
    Rng rng(seed);
    build(rng);
  }

  const ModelSpec& spec() const noexcept { return spec_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  HeadOutput forward(Tape& tape, const Batch& batch, bool training, Rng& rng) {
    check_batch(batch);
    const SeqLayout& layout = batch.audio.layout;
    HeadOutput out;
    if (spec_.kind == ModelKind::kMlpPool) {
      out.pooled = mlp_pool(tape, batch.audio, training, rng);
      out.logits = dense(tape, out.pooled, tape.param(params_, "out.W"), tape.param(params_, "out.b"));
      return out;
    }
    Var x = tape.constant(batch.audio.data);
    Var rep;
    switch (spec_.kind) {
      case ModelKind::kMeanPool:
        out.pooled = masked_mean(tape, x, layout);
        rep = dropout(tape, out.pooled, spec_.dropout, training, rng);
        break;
      case ModelKind::kMeanMaxPool:
        out.pooled = concat_cols(tape, masked_mean(tape, x, layout), masked_max(tape, x, layout));
        rep = dropout(tape, out.pooled, spec_.dropout, training, rng);
        break;
      case ModelKind::kAttentionPool: {
        Var scores = dense(tape, x, tape.param(params_, "attn.w"), tape.param(params_, "attn.b"));
        out.attention = segment_softmax(tape.value(scores), layout);
        out.pooled = attention_pool(tape, scores, x, layout);
        rep = dropout(tape, out.pooled, spec_.dropout, training, rng);
        break;
      }
      case ModelKind::kMlpPool:
        break;
      case ModelKind::kBimodalAlign:
        rep = bimodal(tape, x, batch, training, rng, out);
        break;
    }
    out.logits = dense(tape, rep, tape.param(params_, "out.W"), tape.param(params_, "out.b"));
    return out;
  }

  /// Inference-mode logits, B x K.
  Matrix logits(const Batch& batch) {
    Tape tape;
    Rng unused(0);
    return tape.value(forward(tape, batch, false, unused).logits);
  }

 private:
  void build(Rng& rng) {
    const std::size_t k = spec_.num_classes;
    std::size_t rep = spec_.input_dim;
    switch (spec_.kind) {
      case ModelKind::kMeanPool:
        break;
      case ModelKind::kMeanMaxPool:
        rep = 2 * spec_.input_dim;
        break;
      case ModelKind::kAttentionPool:
        params_.add("attn.w", glorot_uniform(spec_.input_dim, 1, rng));
        params_.add("attn.b", Matrix(1, 1));
        break;
      case ModelKind::kMlpPool:
        for (std::size_t i = 0; i < spec_.mlp_hidden.size(); ++i) {
          const std::string p = "mlp" + std::to_string(i);
          params_.add(p + ".W", glorot_uniform(rep, spec_.mlp_hidden[i], rng));
          params_.add(p + ".b", Matrix(1, spec_.mlp_hidden[i]));
          rep = spec_.mlp_hidden[i];
        }
        break;
      case ModelKind::kBimodalAlign: {
        const std::size_t h = spec_.rnn_hidden;
        add_lstm("audio_fw", spec_.input_dim, rng);
        add_lstm("audio_bw", spec_.input_dim, rng);
        params_.add("text_proj.W", glorot_uniform(spec_.text_dim, 2 * h, rng));
        params_.add("text_proj.b", Matrix(1, 2 * h));
        params_.add("align.W_audio", glorot_uniform(2 * h, 2 * h, rng));
        params_.add("align.W_text", glorot_uniform(2 * h, 2 * h, rng));
        params_.add("align.v", glorot_uniform(2 * h, 1, rng));
        add_lstm("fused_fw", 4 * h, rng);
        add_lstm("fused_bw", 4 * h, rng);
        rep = 2 * h;
        break;
      }
    }
    params_.add("out.W", glorot_uniform(rep, k, rng));
    params_.add("out.b", Matrix(1, k));
  }

  void add_lstm(const std::string& prefix, std::size_t input, Rng& rng) {
    const std::size_t h = spec_.rnn_hidden;
    params_.add(prefix + ".Wx", glorot_uniform(input, 4 * h, rng));
    params_.add(prefix + ".Wh", glorot_uniform(h, 4 * h, rng));
    Matrix bias(1, 4 * h);
    for (std::size_t j = h; j < 2 * h; ++j) {
      bias[j] = 1.0;
    }
    params_.add(prefix + ".b", std::move(bias));
  }

  void check_batch(const Batch& batch) const {
    if (batch.audio.data.cols() != spec_.input_dim) {
      throw DimensionError(std::string(to_string(spec_.kind)) + " expects " + std::to_string(spec_.input_dim) +
                           " input features, batch has " + std::to_string(batch.audio.data.cols()));
    }
    if (spec_.bimodal()) {
      if (!batch.text) {
        throw DataError("bimodal_align requires transcript embeddings for every utterance");
      }
      if (batch.text->data.cols() != spec_.text_dim) {
        throw DimensionError("bimodal_align expects " + std::to_string(spec_.text_dim) +
                             " text features, batch has " + std::to_string(batch.text->data.cols()));
      }
      if (batch.text->layout.batch != batch.audio.layout.batch) {
        throw DimensionError("audio and text batch sizes differ");
      }
    }
  }

  /// Both directions over a padded batch; returns (B * max_len) x 2H. The
  /// state is frozen on padded steps, so the backward direction of a short
  /// sequence starts from zero at its own last frame.
  Var bilstm(Tape& tape, Var x, const SeqLayout& layout, const std::string& fw, const std::string& bw) {
    const std::size_t h = spec_.rnn_hidden;
    std::vector<Var> fw_out(layout.max_len);
    std::vector<Var> bw_out(layout.max_len);
    for (int dir = 0; dir < 2; ++dir) {
      const std::string& p = dir == 0 ? fw : bw;
      Var wx = tape.param(params_, p + ".Wx");
      Var wh = tape.param(params_, p + ".Wh");
      Var b = tape.param(params_, p + ".b");
      LstmState s{tape.constant(Matrix(layout.batch, h)), tape.constant(Matrix(layout.batch, h))};
      for (std::size_t i = 0; i < layout.max_len; ++i) {
        const std::size_t t = dir == 0 ? i : layout.max_len - 1 - i;
        std::vector<bool> keep(layout.batch);
        bool all = true;
        for (std::size_t r = 0; r < layout.batch; ++r) {
          keep[r] = layout.valid(r, t);
          all = all && keep[r];
        }
        const LstmState next = lstm_cell(tape, gather_step(tape, x, layout, t), s.h, s.c, wx, wh, b);
        if (all) {
          s = next;
        } else {
          s = {select_rows(tape, next.h, s.h, keep), select_rows(tape, next.c, s.c, keep)};
        }
        (dir == 0 ? fw_out : bw_out)[t] = s.h;
      }
    }
    return concat_cols(tape, stack_steps(tape, fw_out, layout), stack_steps(tape, bw_out, layout));
  }

  /// The per-frame MLP runs on the valid frames only, packed back to back.
  Var mlp_pool(Tape& tape, const Packed& audio, bool training, Rng& rng) {
    const SeqLayout packed = SeqLayout::packed(audio.layout.lengths);
    Matrix frames(packed.rows(), audio.data.cols());
    for (std::size_t b = 0; b < packed.batch; ++b) {
      std::copy_n(audio.data.row(audio.layout.row(b, 0)).data(), packed.lengths[b] * frames.cols(),
                  frames.row(packed.row(b, 0)).data());
    }
    Var h = tape.constant(std::move(frames));
    for (std::size_t i = 0; i < spec_.mlp_hidden.size(); ++i) {
      const std::string p = "mlp" + std::to_string(i);
      h = relu(tape, dense(tape, h, tape.param(params_, p + ".W"), tape.param(params_, p + ".b")));
      h = dropout(tape, h, spec_.dropout, training, rng);
    }
    return masked_mean(tape, h, packed);
  }

  Var bimodal(Tape& tape, Var audio, const Batch& batch, bool training, Rng& rng, HeadOutput& out) {
    const SeqLayout& al = batch.audio.layout;
    const SeqLayout& tl = batch.text->layout;
    Var states = bilstm(tape, audio, al, "audio_fw", "audio_bw");
    states = dropout(tape, states, spec_.dropout, training, rng);
    Var text = tape.constant(batch.text->data);
    Var proj = dense(tape, text, tape.param(params_, "text_proj.W"), tape.param(params_, "text_proj.b"));
    proj = dropout(tape, proj, spec_.dropout, training, rng);
    Var keys = matmul(tape, states, tape.param(params_, "align.W_audio"));
    Var queries = matmul(tape, proj, tape.param(params_, "align.W_text"));
    Alignment align = additive_align(tape, keys, queries, tape.param(params_, "align.v"), states, al, tl);
    out.attention = std::move(align.weights);
    Var fused = bilstm(tape, concat_cols(tape, proj, align.context), tl, "fused_fw", "fused_bw");
    fused = dropout(tape, fused, spec_.dropout, training, rng);
    out.pooled = masked_mean(tape, fused, tl);
    return out.pooled;
  }

  ModelSpec spec_;
  ParamStore params_;
};

// ---------------------------------------------------------------------------
// Checkpoints ("SCK1", little-endian):
//   magic "SCK1", u16 version = 1, u32 slot count, then per slot
//   u16 name length, name bytes, u32 rows, u32 cols, f64 values row-major;
//   trailer u32 CRC-32 of every preceding byte.

namespace checkpoint {

inline constexpr char kMagic[4] = {'S', 'C', 'K', '1'};
inline constexpr std::uint16_t kVersion = 1;

inline std::vector<unsigned char> encode(const ParamStore& params) {
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  auto put = [&out](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) {
      out.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
  };
  put(kVersion, 2);
  put(params.slots().size(), 4);
  for (const auto& s : params.slots()) {
    put(s.name.size(), 2);
    out.insert(out.end(), s.name.begin(), s.name.end());
    put(s.value.rows(), 4);
    put(s.value.cols(), 4);
    for (double v : s.value.values()) {
      put(std::bit_cast<std::uint64_t>(v), 8);
    }
  }
  put(emb::crc32_of(out.data(), out.size()), 4);
  return out;
}

/// Overwrites the values of `params` from checkpoint bytes. Slot names,
/// order and shapes must match exactly; nothing is modified on failure.
inline void decode_into(const std::vector<unsigned char>& bytes, ParamStore& params,
                        const std::string& where = "checkpoint") {
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (bytes.size() < 4 || pos + n > bytes.size() - 4) {
      throw FormatError(FormatError::Kind::kLengthMismatch, where + ": truncated");
    }
  };
  auto get = [&](int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(bytes[pos++]) << (8 * i);
    }
    return v;
  };
  if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic, where + ": not a checkpoint (bad magic)");
  }
  const std::size_t body = bytes.size() - 4;
  if (emb::crc32_of(bytes.data(), body) != emb::detail::get_u32(bytes.data() + body)) {
    throw FormatError(FormatError::Kind::kCrcMismatch, where + ": CRC mismatch");
  }
  pos = 4;
  if (get(2) != kVersion) {
    throw FormatError(FormatError::Kind::kBadVersion, where + ": unsupported checkpoint version");
  }
  const std::size_t count = get(4);
  if (count != params.slots().size()) {
    throw FormatError(FormatError::Kind::kDimensionMismatch, where + ": " + std::to_string(count) +
                                                                 " slots, model has " +
                                                                 std::to_string(params.slots().size()));
  }
  std::vector<Matrix> values;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t len = get(2);
    need(len);
    const std::string name(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                           bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
    const std::size_t rows = get(4);
    const std::size_t cols = get(4);
    const ParamSlot& slot = params.slots()[i];
    if (name != slot.name || rows != slot.value.rows() || cols != slot.value.cols()) {
      throw FormatError(FormatError::Kind::kDimensionMismatch,
                        where + ": slot " + name + " " + std::to_string(rows) + "x" + std::to_string(cols) +
                            " does not match model slot " + slot.name + " " + slot.value.shape_string());
    }
    Matrix m(rows, cols);
    for (double& v : m.values()) {
      v = std::bit_cast<double>(get(8));
    }
    values.push_back(std::move(m));
  }
  if (pos != body) {
    throw FormatError(FormatError::Kind::kLengthMismatch, where + ": trailing bytes");
  }
  for (std::size_t i = 0; i < count; ++i) {
    params.slots()[i].value = std::move(values[i]);
  }
}

inline void save(const ParamStore& params, const std::filesystem::path& path) {
  const auto bytes = encode(params);
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw IoError("cannot write " + path.string());
  }
}

inline void load(ParamStore& params, const std::filesystem::path& path) {
  decode_into(emb::detail::slurp(path), params, path.string());
}

}  // namespace checkpoint

}  // namespace sertl
