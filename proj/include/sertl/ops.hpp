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

// Differentiable ops recorded on a Tape. Sequence batches are stored as a
// (batch * max_len) x n matrix, row b * max_len + t holding frame t of
// utterance b; rows with t >= lengths[b] are padding and every pooling or
// attention op below ignores them.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sertl/error.hpp"
#include "sertl/matrix.hpp"
#include "sertl/rng.hpp"
#include "sertl/tape.hpp"

namespace sertl {

/// Row placement of a batch of variable-length sequences. Padded layouts
/// put step t of sequence b at row b * max_len + t; packed layouts store the
/// sequences back to back with no padding rows.
struct SeqLayout {
  std::size_t batch = 0;
  std::size_t max_len = 0;
  std::vector<std::size_t> lengths;
  /// First row of each sequence; empty for a padded layout.
  std::vector<std::size_t> offsets;

  static SeqLayout from_lengths(std::vector<std::size_t> lengths) {
    SeqLayout l;
    l.batch = lengths.size();
    l.max_len = lengths.empty() ? 0 : *std::max_element(lengths.begin(), lengths.end());
    l.lengths = std::move(lengths);
    return l;
  }

  static SeqLayout packed(std::vector<std::size_t> lengths) {
    SeqLayout l = from_lengths(std::move(lengths));
    std::size_t next = 0;
    for (std::size_t len : l.lengths) {
      l.offsets.push_back(next);
      next += len;
    }
    return l;
  }

  bool is_packed() const noexcept { return !offsets.empty(); }
  std::size_t rows() const noexcept {
    return is_packed() ? offsets.back() + lengths.back() : batch * max_len;
  }
  std::size_t row(std::size_t b, std::size_t t) const noexcept {
    return is_packed() ? offsets[b] + t : b * max_len + t;
  }
  bool valid(std::size_t b, std::size_t t) const noexcept { return t < lengths[b]; }
};

namespace detail {

inline void check_layout(const Matrix& x, const SeqLayout& layout, const char* op) {
  if (x.rows() != layout.rows()) {
    throw DimensionError(std::string(op) + ": input " + x.shape_string() + " does not match layout " +
                         std::to_string(layout.batch) + "x" + std::to_string(layout.max_len));
  }
  for (std::size_t b = 0; b < layout.batch; ++b) {
    if (layout.lengths[b] == 0) {
      throw DataError(std::string(op) + ": sequence " + std::to_string(b) + " is empty");
    }
  }
}

template <typename Fwd, typename Deriv>
Var unary(Tape& tape, Var x, Fwd fwd, Deriv deriv) {
  const Matrix& xv = tape.value(x);
  Matrix y(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = fwd(xv[i]);
  }
  return tape.record(std::move(y), {x}, [x, deriv](Tape& t, Var self) {
    const Matrix& gy = t.grad(self);
    const Matrix& yv = t.value(self);
    const Matrix& xv = t.value(x);
    Matrix& gx = t.grad(x);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      gx[i] += gy[i] * deriv(xv[i], yv[i]);
    }
  });
}

inline double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var matmul(Tape& tape, Var a, Var b) {
  Matrix y = matmul(tape.value(a), tape.value(b));
  return tape.record(std::move(y), {a, b}, [a, b](Tape& t, Var self) {
    const Matrix& gy = t.grad(self);
    if (t.requires_grad(a)) {
      matmul_nt_acc(gy, t.value(b), t.grad(a));
    }
    if (t.requires_grad(b)) {
      matmul_tn_acc(t.value(a), gy, t.grad(b));
    }
  });
}

/// y[t] = x[t] * W + b for every row t.
inline Var dense(Tape& tape, Var x, Var w, Var b) {
  const Matrix& xv = tape.value(x);
  const Matrix& wv = tape.value(w);
  const Matrix& bv = tape.value(b);
  if (xv.cols() != wv.rows()) {
    throw DimensionError("dense: input " + xv.shape_string() + " incompatible with weight " + wv.shape_string());
  }
  if (bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw DimensionError("dense: bias " + bv.shape_string() + " incompatible with weight " + wv.shape_string());
  }
  Matrix y = matmul(xv, wv);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < y.cols(); ++c) {
      row[c] += bv[c];
    }
  }
  return tape.record(std::move(y), {x, w, b}, [x, w, b](Tape& t, Var self) {
    const Matrix& gy = t.grad(self);
    if (t.requires_grad(x)) {
      matmul_nt_acc(gy, t.value(w), t.grad(x));
    }
    if (t.requires_grad(w)) {
      matmul_tn_acc(t.value(x), gy, t.grad(w));
    }
    if (t.requires_grad(b)) {
      Matrix& gb = t.grad(b);
      for (std::size_t r = 0; r < gy.rows(); ++r) {
        auto row = gy.row(r);
        for (std::size_t c = 0; c < gy.cols(); ++c) {
          gb[c] += row[c];
        }
      }
    }
  });
}

inline Var add(Tape& tape, Var a, Var b) {
  const Matrix& av = tape.value(a);
  const Matrix& bv = tape.value(b);
  if (!av.same_shape(bv)) {
    throw DimensionError("add: " + av.shape_string() + " vs " + bv.shape_string());
  }
  Matrix y = av;
  y += bv;
  return tape.record(std::move(y), {a, b}, [a, b](Tape& t, Var self) {
    const Matrix& gy = t.grad(self);
    if (t.requires_grad(a)) {
      t.grad(a) += gy;
    }
    if (t.requires_grad(b)) {
      t.grad(b) += gy;
    }
  });
}

inline Var mul(Tape& tape, Var a, Var b) {
  const Matrix& av = tape.value(a);
  const Matrix& bv = tape.value(b);
  if (!av.same_shape(bv)) {
    throw DimensionError("mul: " + av.shape_string() + " vs " + bv.shape_string());
  }
  Matrix y(av.rows(), av.cols());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = av[i] * bv[i];
  }
  return tape.record(std::move(y), {a, b}, [a, b](Tape& t, Var self) {
    const Matrix& gy = t.grad(self);
    if (t.requires_grad(a)) {
      Matrix& ga = t.grad(a);
      const Matrix& bv = t.value(b);
      for (std::size_t i = 0; i < gy.size(); ++i) {
        ga[i] += gy[i] * bv[i];
      }
    }
    if (t.requires_grad(b)) {
      Matrix& gb = t.grad(b);
      const Matrix& av = t.value(a);
      for (std::size_t i = 0; i < gy.size(); ++i) {
        gb[i] += gy[i] * av[i];
      }
    }
  });
}

/// Sum of all entries as a 1x1 value.
inline Var sum_all(Tape& tape, Var x) {
  double s = 0.0;
  for (double v : tape.value(x).values()) {
    s += v;
  }
  return tape.record(Matrix(1, 1, s), {x}, [x](Tape& t, Var self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad(x).values()) {
      v += g;
    }
  });
}

inline Var relu(Tape& tape, Var x) {
  return detail::unary(
      tape, x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Var tanh(Tape& tape, Var x) {
  return detail::unary(
      tape, x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(Tape& tape, Var x) {
  return detail::unary(tape, x, detail::sigmoid, [](double, double y) { return y * (1.0 - y); });
}

/// Inverted dropout. Inference mode and rate 0 return x itself.
inline Var dropout(Tape& tape, Var x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) {
    return x;
  }
  const Matrix& xv = tape.value(x);
  const double scale = 1.0 / (1.0 - rate);
  Matrix mask(xv.rows(), xv.cols());
  Matrix y(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = rng.uniform() < rate ? 0.0 : scale;
    y[i] = xv[i] * mask[i];
  }
  return tape.record(std::move(y), {x}, [x, mask = std::move(mask)](Tape& t, Var self) {
    const Matrix& gy = t.grad(self);
    Matrix& gx = t.grad(x);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      gx[i] += gy[i] * mask[i];
    }
  });
}

inline Var concat_cols(Tape& tape, Var a, Var b) {
  const Matrix& av = tape.value(a);
  const Matrix& bv = tape.value(b);
  if (av.rows() != bv.rows()) {
    throw DimensionError("concat_cols: " + av.shape_string() + " vs " + bv.shape_string());
  }
  const std::size_t na = av.cols();
  const std::size_t nb = bv.cols();
  Matrix y(av.rows(), na + nb);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    std::copy(av.row(r).begin(), av.row(r).end(), y.row(r).begin());
    std::copy(bv.row(r).begin(), bv.row(r).end(), y.row(r).begin() + static_cast<std::ptrdiff_t>(na));
  }
  return tape.record(std::move(y), {a, b}, [a, b, na, nb](Tape& t, Var self) {
    const Matrix& gy = t.grad(self);
    const bool ga_on = t.requires_grad(a);
    const bool gb_on = t.requires_grad(b);
    for (std::size_t r = 0; r < gy.rows(); ++r) {
      auto g = gy.row(r);
      if (ga_on) {
        auto ga = t.grad(a).row(r);
        for (std::size_t c = 0; c < na; ++c) {
          ga[c] += g[c];
        }
      }
      if (gb_on) {
        auto gb = t.grad(b).row(r);
        for (std::size_t c = 0; c < nb; ++c) {
          gb[c] += g[na + c];
        }
      }
    }
  });
}

inline Var slice_cols(Tape& tape, Var x, std::size_t begin, std::size_t count) {
  const Matrix& xv = tape.value(x);
  if (begin + count > xv.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of " + xv.shape_string());
  }
  Matrix y(xv.rows(), count);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto src = xv.row(r);
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(begin),
              src.begin() + static_cast<std::ptrdiff_t>(begin + count), y.row(r).begin());
  }
  return tape.record(std::move(y), {x}, [x, begin, count](Tape& t, Var self) {
    const Matrix& gy = t.grad(self);
    Matrix& gx = t.grad(x);
    for (std::size_t r = 0; r < gy.rows(); ++r) {
      for (std::size_t c = 0; c < count; ++c) {
        gx(r, begin + c) += gy(r, c);
      }
    }
  });
}

/// Columnwise mean over the valid frames of each sequence: B x n.
inline Var masked_mean(Tape& tape, Var x, const SeqLayout& layout) {
  const Matrix& xv = tape.value(x);
  detail::check_layout(xv, layout, "masked_mean");
  const std::size_t n = xv.cols();
  Matrix y(layout.batch, n);
  for (std::size_t b = 0; b < layout.batch; ++b) {
    auto out = y.row(b);
    for (std::size_t t = 0; t < layout.lengths[b]; ++t) {
      auto in = xv.row(layout.row(b, t));
      for (std::size_t c = 0; c < n; ++c) {
        out[c] += in[c];
      }
    }
    const auto len = static_cast<double>(layout.lengths[b]);
    for (std::size_t c = 0; c < n; ++c) {
      out[c] /= len;
    }
  }
  return tape.record(std::move(y), {x}, [x, layout](Tape& t, Var self) {
    const Matrix& gy = t.grad(self);
    Matrix& gx = t.grad(x);
    for (std::size_t b = 0; b < layout.batch; ++b) {
      const auto len = static_cast<double>(layout.lengths[b]);
      auto g = gy.row(b);
      for (std::size_t s = 0; s < layout.lengths[b]; ++s) {
        auto out = gx.row(layout.row(b, s));
        for (std::size_t c = 0; c < g.size(); ++c) {
          out[c] += g[c] / len;
        }
      }
    }
  });
}

/// Columnwise max over the valid frames of each sequence: B x n. The
/// gradient flows to the first frame attaining the max.
inline Var masked_max(Tape& tape, Var x, const SeqLayout& layout) {
  const Matrix& xv = tape.value(x);
  detail::check_layout(xv, layout, "masked_max");
  const std::size_t n = xv.cols();
  Matrix y(layout.batch, n);
  std::vector<std::size_t> arg(layout.batch * n);
  for (std::size_t b = 0; b < layout.batch; ++b) {
    for (std::size_t c = 0; c < n; ++c) {
      std::size_t best = layout.row(b, 0);
      for (std::size_t t = 1; t < layout.lengths[b]; ++t) {
        const std::size_t r = layout.row(b, t);
        if (xv(r, c) > xv(best, c)) {
          best = r;
        }
      }
      y(b, c) = xv(best, c);
      arg[b * n + c] = best;
    }
  }
  return tape.record(std::move(y), {x}, [x, n, arg = std::move(arg)](Tape& t, Var self) {
    const Matrix& gy = t.grad(self);
    Matrix& gx = t.grad(x);
    for (std::size_t i = 0; i < arg.size(); ++i) {
      gx(arg[i], i % n) += gy[i];
    }
  });
}

/// Softmax over the valid entries of each sequence's scores (rows x 1);
/// padded entries are 0. Not recorded on a tape.
inline Matrix segment_softmax(const Matrix& scores, const SeqLayout& layout) {
  detail::check_layout(scores, layout, "segment_softmax");
  Matrix alpha(scores.rows(), 1);
  for (std::size_t b = 0; b < layout.batch; ++b) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < layout.lengths[b]; ++t) {
      mx = std::max(mx, scores[layout.row(b, t)]);
    }
    double denom = 0.0;
    for (std::size_t t = 0; t < layout.lengths[b]; ++t) {
      const std::size_t r = layout.row(b, t);
      alpha[r] = std::exp(scores[r] - mx);
      denom += alpha[r];
    }
    for (std::size_t t = 0; t < layout.lengths[b]; ++t) {
      alpha[layout.row(b, t)] /= denom;
    }
  }
  return alpha;
}

/// Attention-weighted pooling: pooled[b] = sum_t e_t x_t / sum_t e_t with
/// e_t = exp(score_t - max score). Normalizing after the sum makes equal
/// scores reproduce masked_mean bit for bit.
inline Var attention_pool(Tape& tape, Var scores, Var x, const SeqLayout& layout) {
  const Matrix& sv = tape.value(scores);
  const Matrix& xv = tape.value(x);
  detail::check_layout(xv, layout, "attention_pool");
  if (sv.rows() != xv.rows() || sv.cols() != 1) {
    throw DimensionError("attention_pool: scores " + sv.shape_string() + " vs frames " + xv.shape_string());
  }
  const std::size_t n = xv.cols();
  Matrix y(layout.batch, n);
  Matrix alpha(sv.rows(), 1);
  for (std::size_t b = 0; b < layout.batch; ++b) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < layout.lengths[b]; ++t) {
      mx = std::max(mx, sv[layout.row(b, t)]);
    }
    double denom = 0.0;
    auto out = y.row(b);
    for (std::size_t t = 0; t < layout.lengths[b]; ++t) {
      const std::size_t r = layout.row(b, t);
      const double e = std::exp(sv[r] - mx);
      alpha[r] = e;
      denom += e;
      auto in = xv.row(r);
      for (std::size_t c = 0; c < n; ++c) {
        out[c] += e * in[c];
      }
    }
    for (std::size_t c = 0; c < n; ++c) {
      out[c] /= denom;
    }
    for (std::size_t t = 0; t < layout.lengths[b]; ++t) {
      alpha[layout.row(b, t)] /= denom;
    }
  }
  return tape.record(std::move(y), {scores, x},
                     [scores, x, layout, alpha = std::move(alpha)](Tape& t, Var self) {
                       const Matrix& gy = t.grad(self);
                       const Matrix& yv = t.value(self);
                       const Matrix& xv = t.value(x);
                       const bool gs_on = t.requires_grad(scores);
                       const bool gx_on = t.requires_grad(x);
                       for (std::size_t b = 0; b < layout.batch; ++b) {
                         auto g = gy.row(b);
                         auto pooled = yv.row(b);
                         for (std::size_t s = 0; s < layout.lengths[b]; ++s) {
                           const std::size_t r = layout.row(b, s);
                           auto in = xv.row(r);
                           if (gs_on) {
                             double dot = 0.0;
                             for (std::size_t c = 0; c < g.size(); ++c) {
                               dot += g[c] * (in[c] - pooled[c]);
                             }
                             t.grad(scores)[r] += alpha[r] * dot;
                           }
                           if (gx_on) {
                             auto gx = t.grad(x).row(r);
                             for (std::size_t c = 0; c < g.size(); ++c) {
                               gx[c] += alpha[r] * g[c];
                             }
                           }
                         }
                       }
                     });
}

struct SoftmaxXent {
  Var loss;
  Matrix probs;
};

/// Mean softmax cross-entropy over the rows of logits, stabilized with
/// log-sum-exp.
inline SoftmaxXent softmax_xent(Tape& tape, Var logits, std::span<const int> labels) {
  const Matrix& z = tape.value(logits);
  if (labels.size() != z.rows()) {
    throw DimensionError("softmax_xent: " + std::to_string(labels.size()) + " labels for logits " +
                         z.shape_string());
  }
  if (!z.all_finite()) {
    throw NumericError("softmax_xent: non-finite logits");
  }
  const std::size_t k = z.cols();
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
      throw DataError("softmax_xent: label " + std::to_string(labels[r]) + " at row " + std::to_string(r) +
                      " out of range for " + std::to_string(k) + " classes");
    }
  }
  Matrix probs(z.rows(), k);
  double total = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto zr = z.row(r);
    const double mx = *std::max_element(zr.begin(), zr.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      sum += std::exp(zr[c] - mx);
    }
    const double lse = mx + std::log(sum);
    for (std::size_t c = 0; c < k; ++c) {
      probs(r, c) = std::exp(zr[c] - lse);
    }
    total += lse - zr[static_cast<std::size_t>(labels[r])];
  }
  const auto batch = static_cast<double>(z.rows());
  std::vector<int> owned(labels.begin(), labels.end());
  Var loss = tape.record(Matrix(1, 1, total / batch), {logits},
                         [logits, probs, owned = std::move(owned), batch](Tape& t, Var self) {
                           const double g = t.grad(self)[0];
                           Matrix& gz = t.grad(logits);
                           for (std::size_t r = 0; r < probs.rows(); ++r) {
                             for (std::size_t c = 0; c < probs.cols(); ++c) {
                               const double onehot = static_cast<int>(c) == owned[r] ? 1.0 : 0.0;
                               gz(r, c) += g * (probs(r, c) - onehot) / batch;
                             }
                           }
                         });
  return {loss, std::move(probs)};
}

// ---------------------------------------------------------------------------
// Recurrent building blocks.

/// Rows t of every sequence as a B x n matrix.
inline Var gather_step(Tape& tape, Var x, const SeqLayout& layout, std::size_t step) {
  if (layout.is_packed()) {
    throw DimensionError("gather_step: needs a padded layout");
  }
  const Matrix& xv = tape.value(x);
  Matrix y(layout.batch, xv.cols());
  for (std::size_t b = 0; b < layout.batch; ++b) {
    auto src = xv.row(layout.row(b, step));
    std::copy(src.begin(), src.end(), y.row(b).begin());
  }
  return tape.record(std::move(y), {x}, [x, layout, step](Tape& t, Var self) {
    const Matrix& gy = t.grad(self);
    Matrix& gx = t.grad(x);
    for (std::size_t b = 0; b < layout.batch; ++b) {
      auto dst = gx.row(layout.row(b, step));
      auto g = gy.row(b);
      for (std::size_t c = 0; c < g.size(); ++c) {
        dst[c] += g[c];
      }
    }
  });
}

/// Inverse of gather_step over all steps: steps[t] is B x n, result is
/// (B * max_len) x n.
inline Var stack_steps(Tape& tape, const std::vector<Var>& steps, const SeqLayout& layout) {
  if (layout.is_packed()) {
    throw DimensionError("stack_steps: needs a padded layout");
  }
  if (steps.size() != layout.max_len) {
    throw DimensionError("stack_steps: " + std::to_string(steps.size()) + " steps for max_len " +
                         std::to_string(layout.max_len));
  }
  const std::size_t n = steps.empty() ? 0 : tape.value(steps.front()).cols();
  Matrix y(layout.rows(), n);
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const Matrix& sv = tape.value(steps[s]);
    for (std::size_t b = 0; b < layout.batch; ++b) {
      std::copy(sv.row(b).begin(), sv.row(b).end(), y.row(layout.row(b, s)).begin());
    }
  }
  return tape.record(std::move(y), steps, [steps, layout](Tape& t, Var self) {
    const Matrix& gy = t.grad(self);
    for (std::size_t s = 0; s < steps.size(); ++s) {
      if (!t.requires_grad(steps[s])) {
        continue;
      }
      Matrix& gs = t.grad(steps[s]);
      for (std::size_t b = 0; b < layout.batch; ++b) {
        auto src = gy.row(layout.row(b, s));
        auto dst = gs.row(b);
        for (std::size_t c = 0; c < src.size(); ++c) {
          dst[c] += src[c];
        }
      }
    }
  });
}

/// Row b comes from `next` where keep[b] is set, else from `prev`.
inline Var select_rows(Tape& tape, Var next, Var prev, std::vector<bool> keep) {
  const Matrix& nv = tape.value(next);
  const Matrix& pv = tape.value(prev);
  if (!nv.same_shape(pv) || keep.size() != nv.rows()) {
    throw DimensionError("select_rows: " + nv.shape_string() + " vs " + pv.shape_string());
  }
  Matrix y(nv.rows(), nv.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    const auto src = keep[r] ? nv.row(r) : pv.row(r);
    std::copy(src.begin(), src.end(), y.row(r).begin());
  }
  return tape.record(std::move(y), {next, prev}, [next, prev, keep = std::move(keep)](Tape& t, Var self) {
    const Matrix& gy = t.grad(self);
    for (std::size_t r = 0; r < gy.rows(); ++r) {
      const Var target = keep[r] ? next : prev;
      if (!t.requires_grad(target)) {
        continue;
      }
      auto dst = t.grad(target).row(r);
      auto g = gy.row(r);
      for (std::size_t c = 0; c < g.size(); ++c) {
        dst[c] += g[c];
      }
    }
  });
}

struct LstmState {
  Var h;
  Var c;
};

/// Gate pre-activation layout is [input | forget | candidate | output],
/// each H wide.
inline LstmState lstm_cell(Tape& tape, Var x, Var h_prev, Var c_prev, Var w_input, Var w_hidden, Var bias) {
  const Matrix& xv = tape.value(x);
  const Matrix& hv = tape.value(h_prev);
  const Matrix& cv = tape.value(c_prev);
  const Matrix& wx = tape.value(w_input);
  const Matrix& wh = tape.value(w_hidden);
  const std::size_t hidden = hv.cols();
  if (wx.cols() != 4 * hidden || wh.rows() != hidden || wh.cols() != 4 * hidden || !cv.same_shape(hv) ||
      xv.rows() != hv.rows() || xv.cols() != wx.rows()) {
    throw DimensionError("lstm_cell: x " + xv.shape_string() + ", h " + hv.shape_string() + ", c " +
                         cv.shape_string() + ", W_input " + wx.shape_string() + ", W_hidden " +
                         wh.shape_string());
  }
  Var z = add(tape, dense(tape, x, w_input, bias), matmul(tape, h_prev, w_hidden));

  // Recording z may have reallocated the tape; re-fetch the references.
  const Matrix& zv = tape.value(z);
  const Matrix& cv_now = tape.value(c_prev);
  const std::size_t batch = zv.rows();
  Matrix hc(batch, 2 * hidden);
  for (std::size_t b = 0; b < batch; ++b) {
    auto zr = zv.row(b);
    for (std::size_t j = 0; j < hidden; ++j) {
      const double i = detail::sigmoid(zr[j]);
      const double f = detail::sigmoid(zr[hidden + j]);
      const double g = std::tanh(zr[2 * hidden + j]);
      const double o = detail::sigmoid(zr[3 * hidden + j]);
      const double c = f * cv_now(b, j) + i * g;
      hc(b, j) = o * std::tanh(c);
      hc(b, hidden + j) = c;
    }
  }
  Var cell = tape.record(std::move(hc), {z, c_prev}, [z, c_prev, hidden](Tape& t, Var self) {
    const Matrix& g_hc = t.grad(self);
    const Matrix& hcv = t.value(self);
    const Matrix& zv = t.value(z);
    const Matrix& cp = t.value(c_prev);
    Matrix& gz = t.grad(z);
    const bool gc_on = t.requires_grad(c_prev);
    for (std::size_t b = 0; b < zv.rows(); ++b) {
      auto zr = zv.row(b);
      for (std::size_t j = 0; j < hidden; ++j) {
        const double i = detail::sigmoid(zr[j]);
        const double f = detail::sigmoid(zr[hidden + j]);
        const double g = std::tanh(zr[2 * hidden + j]);
        const double o = detail::sigmoid(zr[3 * hidden + j]);
        const double c = hcv(b, hidden + j);
        const double tc = std::tanh(c);
        const double gh = g_hc(b, j);
        const double gc = g_hc(b, hidden + j) + gh * o * (1.0 - tc * tc);
        gz(b, j) += gc * g * i * (1.0 - i);
        gz(b, hidden + j) += gc * cp(b, j) * f * (1.0 - f);
        gz(b, 2 * hidden + j) += gc * i * (1.0 - g * g);
        gz(b, 3 * hidden + j) += gh * tc * o * (1.0 - o);
        if (gc_on) {
          t.grad(c_prev)(b, j) += gc * f;
        }
      }
    }
  });
  return {slice_cols(tape, cell, 0, hidden), slice_cols(tape, cell, hidden, hidden)};
}

struct Alignment {
  Var context;
  /// (B * text max_len) x audio max_len attention weights; padding rows and
  /// columns are zero.
  Matrix weights;
};

/// Additive attention of every text position over the audio states of the
/// same utterance: score_jt = v . tanh(audio_keys_t + text_queries_j),
/// context_j = sum_t e_jt audio_values_t / sum_t e_jt. Context rows of
/// padded text positions are zero.
inline Alignment additive_align(Tape& tape, Var audio_keys, Var text_queries, Var v, Var audio_values,
                                const SeqLayout& audio, const SeqLayout& text) {
  const Matrix& kv = tape.value(audio_keys);
  const Matrix& qv = tape.value(text_queries);
  const Matrix& vv = tape.value(v);
  const Matrix& av = tape.value(audio_values);
  detail::check_layout(kv, audio, "additive_align");
  detail::check_layout(av, audio, "additive_align");
  detail::check_layout(qv, text, "additive_align");
  const std::size_t dim = kv.cols();
  if (qv.cols() != dim || vv.rows() != dim || vv.cols() != 1 || audio.batch != text.batch) {
    throw DimensionError("additive_align: keys " + kv.shape_string() + ", queries " + qv.shape_string() +
                         ", v " + vv.shape_string());
  }
  const std::size_t width = av.cols();
  Matrix ctx(text.rows(), width);
  Matrix weights(text.rows(), audio.max_len);
  for (std::size_t b = 0; b < text.batch; ++b) {
    for (std::size_t j = 0; j < text.lengths[b]; ++j) {
      const std::size_t qr = text.row(b, j);
      auto q = qv.row(qr);
      auto w = weights.row(qr);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < audio.lengths[b]; ++s) {
        auto k = kv.row(audio.row(b, s));
        double score = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
          score += vv[d] * std::tanh(k[d] + q[d]);
        }
        w[s] = score;
        mx = std::max(mx, score);
      }
      double denom = 0.0;
      auto out = ctx.row(qr);
      for (std::size_t s = 0; s < audio.lengths[b]; ++s) {
        const double e = std::exp(w[s] - mx);
        w[s] = e;
        denom += e;
        auto a = av.row(audio.row(b, s));
        for (std::size_t c = 0; c < width; ++c) {
          out[c] += e * a[c];
        }
      }
      for (std::size_t c = 0; c < width; ++c) {
        out[c] /= denom;
      }
      for (std::size_t s = 0; s < audio.lengths[b]; ++s) {
        w[s] /= denom;
      }
    }
  }
  Matrix saved = weights;
  Var context = tape.record(
      std::move(ctx), {audio_keys, text_queries, v, audio_values},
      [audio_keys, text_queries, v, audio_values, audio, text, alpha = std::move(saved)](Tape& t, Var self) {
        const Matrix& gy = t.grad(self);
        const Matrix& yv = t.value(self);
        const Matrix& kv = t.value(audio_keys);
        const Matrix& qv = t.value(text_queries);
        const Matrix& vv = t.value(v);
        const Matrix& av = t.value(audio_values);
        const std::size_t dim = kv.cols();
        const bool gk_on = t.requires_grad(audio_keys);
        const bool gq_on = t.requires_grad(text_queries);
        const bool gv_on = t.requires_grad(v);
        const bool ga_on = t.requires_grad(audio_values);
        for (std::size_t b = 0; b < text.batch; ++b) {
          for (std::size_t j = 0; j < text.lengths[b]; ++j) {
            const std::size_t qr = text.row(b, j);
            auto g = gy.row(qr);
            auto pooled = yv.row(qr);
            auto q = qv.row(qr);
            for (std::size_t s = 0; s < audio.lengths[b]; ++s) {
              const std::size_t ar = audio.row(b, s);
              const double a_js = alpha(qr, s);
              auto vals = av.row(ar);
              if (ga_on) {
                auto ga = t.grad(audio_values).row(ar);
                for (std::size_t c = 0; c < g.size(); ++c) {
                  ga[c] += a_js * g[c];
                }
              }
              double dot = 0.0;
              for (std::size_t c = 0; c < g.size(); ++c) {
                dot += g[c] * (vals[c] - pooled[c]);
              }
              const double g_score = a_js * dot;
              if (g_score == 0.0) {
                continue;
              }
              auto k = kv.row(ar);
              for (std::size_t d = 0; d < dim; ++d) {
                const double u = std::tanh(k[d] + q[d]);
                if (gv_on) {
                  t.grad(v)[d] += g_score * u;
                }
                const double g_pre = g_score * vv[d] * (1.0 - u * u);
                if (gk_on) {
                  t.grad(audio_keys)(ar, d) += g_pre;
                }
                if (gq_on) {
                  t.grad(text_queries)(qr, d) += g_pre;
                }
              }
            }
          }
        }
      });
  return {context, std::move(weights)};
}

}  // namespace sertl
