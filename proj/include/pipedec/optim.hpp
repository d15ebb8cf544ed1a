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

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pipedec/tensor.hpp"

namespace pipedec {

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay Adam with bias correction. Moment buffers are
// created on the first step and bound to parameter order.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig config);

  // Applies one update from each parameter's accumulated grad. Throws
  // TrainingDivergence naming the first parameter with a non-finite gradient;
  // no parameter is modified in that case.
  void step(std::span<Parameter<T>* const> params);

  void set_lr(double lr) { config_.lr = lr; }
  const AdamWConfig& config() const { return config_; }
  std::int64_t steps() const { return steps_; }

 private:
  AdamWConfig config_;
  std::int64_t steps_ = 0;
  std::vector<std::vector<T>> first_;
  std::vector<std::vector<T>> second_;
};

}  // namespace pipedec
