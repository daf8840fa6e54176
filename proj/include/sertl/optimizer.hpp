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

#include <cmath>

#include "sertl/error.hpp"
#include "sertl/param_store.hpp"

namespace sertl {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam update with bias correction over every slot, then zeroes the
/// gradients. Non-finite gradients abort the step before anything changes.
inline void adam_step(ParamStore& params, const AdamOptions& opt) {
  for (const auto& s : params.slots()) {
    if (!s.grad.all_finite()) {
      throw NumericError("adam_step: non-finite gradient in slot '" + s.name + "'");
    }
  }
  const auto t = static_cast<double>(params.step_count() + 1);
  const double correction1 = 1.0 - std::pow(opt.beta1, t);
  const double correction2 = 1.0 - std::pow(opt.beta2, t);
  for (auto& s : params.slots()) {
    auto value = s.value.values();
    auto grad = s.grad.values();
    auto m = s.adam_m.values();
    auto v = s.adam_v.values();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g;
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      value[i] -= opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps);
    }
  }
  params.zero_grad();
  params.set_step_count(params.step_count() + 1);
}

}  // namespace sertl
