// Copyright 2026 The pipedec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pipedec/optim.hpp"

#include <cmath>
#include <string>

namespace pipedec {

template <typename T>
AdamW<T>::AdamW(AdamWConfig config) : config_(config) {
  if (!(config_.lr >= 0) || !(config_.beta1 > 0 && config_.beta1 < 1) ||
      !(config_.beta2 > 0 && config_.beta2 < 1) || !(config_.eps > 0) ||
      !(config_.weight_decay >= 0)) {
    throw ContractError("AdamW: hyperparameters out of range");
  }
}

template <typename T>
void AdamW<T>::step(std::span<Parameter<T>* const> params) {
  if (first_.empty()) {
    for (const Parameter<T>* p : params) {
      first_.emplace_back(p->value.size(), T{0});
      second_.emplace_back(p->value.size(), T{0});
    }
  }
  if (first_.size() != params.size()) {
    throw ContractError("AdamW: parameter list changed between steps");
  }
  for (const Parameter<T>* p : params) {
    if (p->grad.size() != p->value.size()) {
      throw DimensionError("AdamW: gradient shape " + shape_str(p->grad.shape()) +
                           " for parameter " + p->name + " of shape " +
                           shape_str(p->value.shape()));
    }
    for (T g : p->grad.values()) {
      if (!std::isfinite(g)) {
        throw TrainingDivergence("non-finite gradient in parameter " + p->name);
      }
    }
  }
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const T lr = static_cast<T>(config_.lr);
  const T decay = static_cast<T>(config_.lr * config_.weight_decay);
  const T step_size = static_cast<T>(config_.lr / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(config_.eps);
  const T tb1 = static_cast<T>(b1), tb2 = static_cast<T>(b2);
  for (std::size_t n = 0; n < params.size(); ++n) {
    Parameter<T>& p = *params[n];
    T* w = p.value.data();
    const T* g = p.grad.data();
    T* m = first_[n].data();
    T* v = second_[n].data();
    const std::size_t size = p.value.size();
    if (lr == T{0}) {
      for (std::size_t i = 0; i < size; ++i) {
        m[i] = tb1 * m[i] + (T{1} - tb1) * g[i];
        v[i] = tb2 * v[i] + (T{1} - tb2) * g[i] * g[i];
      }
      continue;
    }
    for (std::size_t i = 0; i < size; ++i) {
      m[i] = tb1 * m[i] + (T{1} - tb1) * g[i];
      v[i] = tb2 * v[i] + (T{1} - tb2) * g[i] * g[i];
      w[i] -= decay * w[i];
      w[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace pipedec
