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

// Property checks over classifier heads, shared by unit and acceptance tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "sertl/models.hpp"
#include "support/gradcheck.hpp"

namespace sertl::testing {

inline const std::vector<ModelKind>& all_heads() {
  static const std::vector<ModelKind> kinds = {ModelKind::kMeanPool, ModelKind::kMeanMaxPool,
                                               ModelKind::kAttentionPool, ModelKind::kMlpPool,
                                               ModelKind::kBimodalAlign};
  return kinds;
}

/// Small ModelSpec for finite-difference work.
inline ModelSpec tiny_spec(ModelKind kind) {
  ModelSpec s;
  s.kind = kind;
  s.input_dim = 3;
  s.text_dim = 4;
  s.rnn_hidden = 2;
  s.dropout = 0.2;
  if (kind == ModelKind::kMlpPool) {
    s.mlp_hidden = {5, 4};
  }
  return s;
}

struct Utterances {
  std::vector<Matrix> audio;
  std::vector<Matrix> text;
};

inline Utterances random_utterances(const ModelSpec& spec, const std::vector<std::size_t>& audio_lengths,
                                    const std::vector<std::size_t>& text_lengths, Rng& rng, double scale = 1.0) {
  Utterances u;
  for (std::size_t t : audio_lengths) {
    u.audio.push_back(random_matrix(t, spec.input_dim, rng, scale));
  }
  if (spec.bimodal()) {
    for (std::size_t t : text_lengths) {
      u.text.push_back(random_matrix(t, spec.text_dim, rng, scale));
    }
  }
  return u;
}

inline Batch batch_of(const Utterances& u, std::size_t begin, std::size_t count) {
  std::vector<const Matrix*> audio;
  std::vector<const Matrix*> text;
  for (std::size_t i = begin; i < begin + count; ++i) {
    audio.push_back(&u.audio[i]);
    if (!u.text.empty()) {
      text.push_back(&u.text[i]);
    }
  }
  return make_batch(audio, text);
}

/// Central-difference check of a whole head, training mode with a fixed
/// dropout stream so every evaluation sees the same masks.
inline GradCheckResult head_gradient_check(const ModelSpec& spec, std::uint64_t seed,
                                           const std::vector<std::size_t>& audio_lengths,
                                           const std::vector<std::size_t>& text_lengths) {
  Rng rng(seed);
  Model model(spec, rng);
  const Utterances u = random_utterances(spec, audio_lengths, text_lengths, rng);
  const Batch batch = batch_of(u, 0, audio_lengths.size());
  std::vector<int> labels;
  for (std::size_t i = 0; i < audio_lengths.size(); ++i) {
    labels.push_back(static_cast<int>(i % spec.num_classes));
  }
  return check_gradients(model.params(), [&](Tape& tape) {
    Rng drop(seed + 1);
    const HeadOutput out = model.forward(tape, batch, true, drop);
    return softmax_xent(tape, out.logits, labels).loss;
  });
}

/// Largest |padded-batch logit - single-utterance logit| over `count`
/// utterances with lengths drawn from [1, max_len].
inline double masked_batch_gap(const ModelSpec& spec, std::uint64_t seed, std::size_t count, std::size_t max_len) {
  Rng rng(seed);
  Model model(spec, rng);
  std::vector<std::size_t> al;
  std::vector<std::size_t> tl;
  for (std::size_t i = 0; i < count; ++i) {
    al.push_back(1 + rng.below(max_len));
    tl.push_back(1 + rng.below(max_len));
  }
  const Utterances u = random_utterances(spec, al, tl, rng);
  const Matrix batched = model.logits(batch_of(u, 0, count));
  double gap = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const Matrix single = model.logits(batch_of(u, i, 1));
    for (std::size_t k = 0; k < single.cols(); ++k) {
      gap = std::max(gap, std::abs(single(0, k) - batched(i, k)));
    }
  }
  return gap;
}

/// Pooled vector of an attention_pool head with zeroed attention parameters
/// against that of a mean_pool head; largest absolute difference.
inline double zero_attention_gap(std::size_t input_dim, std::uint64_t seed, std::size_t sequences) {
  Rng rng(seed);
  ModelSpec att = make_spec(ModelKind::kAttentionPool, input_dim);
  ModelSpec mean = make_spec(ModelKind::kMeanPool, input_dim);
  Model a(att, rng);
  Model m(mean, rng);
  a.params().slot("attn.w").value.fill(0.0);
  a.params().slot("attn.b").value.fill(0.0);
  double gap = 0.0;
  for (std::size_t i = 0; i < sequences; ++i) {
    const Matrix x = random_matrix(1 + rng.below(100), input_dim, rng, 3.0);
    const Batch batch = make_batch({&x});
    Tape ta;
    Tape tm;
    Rng unused(0);
    const Matrix& pa = ta.value(a.forward(ta, batch, false, unused).pooled);
    const Matrix& pm = tm.value(m.forward(tm, batch, false, unused).pooled);
    for (std::size_t c = 0; c < pa.size(); ++c) {
      gap = std::max(gap, std::abs(pa[c] - pm[c]));
    }
  }
  return gap;
}

}  // namespace sertl::testing
