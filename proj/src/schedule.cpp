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

#include "pipedec/schedule.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>
#include <string>

#include "pipedec/errors.hpp"

namespace pipedec {

void PipelineSchedule::validate() const {
  if (delay < 1 || time_max < 1 || sub_max < 1) {
    throw ContractError("pipeline schedule fields must be positive (delay=" +
                        std::to_string(delay) + ", time_max=" + std::to_string(time_max) +
                        ", sub_max=" + std::to_string(sub_max) + ")");
  }
}

int timestep_of(GridPosition pos, int delay) {
  return (pos.subseq - 1) * delay + pos.offset;
}

int active_subsequences(int t, int delay) {
  if (t < 1 || delay < 1) {
    throw ContractError("active_subsequences needs t >= 1 and delay >= 1");
  }
  return (t + delay - 1) / delay;
}

int manhattan_distance(GridPosition a, GridPosition b, int delay) {
  return std::abs(timestep_of(a, delay) - timestep_of(b, delay)) +
         std::abs(a.subseq - b.subseq);
}

MaskMatrix MaskMatrix::causal(int size) {
  MaskMatrix m(size);
  for (int q = 0; q < size; ++q)
    for (int k = 0; k <= q; ++k) m.set(q, k, true);
  return m;
}

MaskMatrix build_self_attention_mask(std::span<const GridPosition> positions, int delay) {
  if (delay < 1) throw ContractError("delay must be >= 1");
  std::set<GridPosition> seen;
  for (const GridPosition& p : positions) {
    if (p.subseq < 1 || p.offset < 0) {
      throw LayoutError("invalid grid position (" + std::to_string(p.subseq) + "," +
                        std::to_string(p.offset) + ")");
    }
    if (!seen.insert(p).second) {
      throw LayoutError("duplicate grid position (" + std::to_string(p.subseq) + "," +
                        std::to_string(p.offset) + ")");
    }
  }
  const int n = static_cast<int>(positions.size());
  std::vector<int> ts(positions.size());
  for (int i = 0; i < n; ++i) ts[i] = timestep_of(positions[i], delay);
  MaskMatrix mask(n);
  for (int q = 0; q < n; ++q) {
    for (int k = 0; k < n; ++k) {
      mask.set(q, k, positions[k].subseq <= positions[q].subseq && ts[k] <= ts[q]);
    }
  }
  return mask;
}

bool is_canonical_order(std::span<const GridPosition> positions, int delay) {
  for (std::size_t i = 1; i < positions.size(); ++i) {
    const auto prev = std::make_pair(timestep_of(positions[i - 1], delay), positions[i - 1].subseq);
    const auto cur = std::make_pair(timestep_of(positions[i], delay), positions[i].subseq);
    if (!(prev < cur)) return false;
  }
  return true;
}

int completion_steps(std::span<const int> lengths, int delay) {
  if (lengths.empty()) throw ContractError("completion_steps needs at least one subsequence");
  if (delay < 1) throw ContractError("delay must be >= 1");
  // Subsequence i emits <eos> at step (i-1)*delay + m_i + 1. An exploratory
  // subsequence emits <eos> on the step that opens it, so the loop ends as
  // soon as the slowest content subsequence is done.
  int steps = 0;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] < 1) throw ContractError("subsequence lengths must be >= 1");
    steps = std::max(steps, static_cast<int>(i) * delay + lengths[i] + 1);
  }
  return steps;
}

}  // namespace pipedec
