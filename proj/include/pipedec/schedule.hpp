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

// Timestep algebra of the pipelined decoder. Subsequence i (1-based) is
// opened by its <bos> at offset 0; the token at offset j of subsequence i
// is produced at time-step (i-1)*delay + j.

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

namespace pipedec {

struct GridPosition {
  int subseq = 1;  // i >= 1
  int offset = 0;  // j >= 0, 0 is the subsequence's <bos>

  friend auto operator<=>(const GridPosition&, const GridPosition&) = default;
};

struct PipelineSchedule {
  int delay = 1;
  int time_max = 50;
  int sub_max = 20;

  // Throws ContractError unless every field is positive.
  void validate() const;
};

int timestep_of(GridPosition pos, int delay);

// Number of subsequences present at time-step t: ceil(t / delay).
int active_subsequences(int t, int delay);

// |timestep(a) - timestep(b)| + |i_a - i_b|
int manhattan_distance(GridPosition a, GridPosition b, int delay);

// Square boolean matrix over packed positions; allowed(q, k) says query q may
// attend key k.
class MaskMatrix {
 public:
  MaskMatrix() = default;
  explicit MaskMatrix(int size) : size_(size), bits_(static_cast<std::size_t>(size) * size, 0) {}

  int size() const { return size_; }
  bool allowed(int q, int k) const {
    return bits_[static_cast<std::size_t>(q) * size_ + k] != 0;
  }
  void set(int q, int k, bool v) {
    bits_[static_cast<std::size_t>(q) * size_ + k] = v ? 1 : 0;
  }
  std::span<const std::uint8_t> row(int q) const {
    return std::span<const std::uint8_t>(bits_).subspan(static_cast<std::size_t>(q) * size_, size_);
  }
  std::span<const std::uint8_t> bits() const { return bits_; }

  static MaskMatrix causal(int size);

  friend bool operator==(const MaskMatrix&, const MaskMatrix&) = default;

 private:
  int size_ = 0;
  std::vector<std::uint8_t> bits_;
};

// allowed(q, k) iff i_k <= i_q and timestep(k) <= timestep(q). Throws
// LayoutError on duplicate or invalid positions.
MaskMatrix build_self_attention_mask(std::span<const GridPosition> positions, int delay);

// True when positions are strictly increasing by (timestep, subseq).
bool is_canonical_order(std::span<const GridPosition> positions, int delay);

// Time-steps the decode loop needs when subsequence i emits exactly
// lengths[i-1] content tokens then <eos> and every later subsequence emits
// <eos> at once. Assumes lengths.size() <= sub_max.
int completion_steps(std::span<const int> lengths, int delay);

}  // namespace pipedec
