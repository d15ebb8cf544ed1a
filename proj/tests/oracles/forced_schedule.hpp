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

// Step-by-step replay of the decode loop with forced outputs. Subsequence i
// emits lengths[i-1] content tokens then <eos>; any later subsequence emits
// <eos> at once. Nothing here uses the library's timestep algebra: feed
// steps and visibility come from the replay itself.

#include <map>
#include <utility>
#include <vector>

namespace oracle {

struct FedToken {
  int subseq;       // 1-based
  int offset;       // 0 is <bos>
  int fed_at;  // step on which the decoder consumed it
};

struct Replay {
  std::vector<FedToken> fed;                 // consumption order
  std::vector<int> emitted_per_step;         // <eos> included
  std::vector<int> content_per_step;
  std::vector<int> active_per_step;
  int steps = 0;
  int established = 0;
};

enum class Stop {
  kAllEstablished,  // every established subsequence is done (the decode loop)
  kTerminator,      // subsequence n+1 exists and is done (the training target)
  kAllTargets,      // the n target subsequences are done, however long that takes
};

// kAllEstablished can stop before a later target subsequence is ever
// established when an earlier one finishes inside the delay gap.
inline Replay replay(const std::vector<int>& lengths, int delay, Stop stop,
                     int sub_max = 1000, int time_max = 1000) {
  const bool until_terminator = stop == Stop::kTerminator;
  const int n = static_cast<int>(lengths.size());
  Replay r;
  std::vector<int> produced;  // per established subsequence: tokens after <bos>
  std::vector<bool> done;
  std::vector<std::pair<int, int>> pending;  // (subseq, offset) to feed next
  for (int t = 1; t <= time_max; ++t) {
    const int cap = until_terminator ? n + 1 : sub_max;
    if ((t - 1) % delay == 0 && r.established < cap) {
      ++r.established;
      produced.push_back(0);
      done.push_back(false);
      pending.emplace_back(r.established, 0);
    }
    std::vector<std::pair<int, int>> next;
    int emitted = 0, content = 0;
    for (auto [i, j] : pending) {
      r.fed.push_back({i, j, t});
      if (done[i - 1]) continue;
      const int len = i <= n ? lengths[i - 1] : 0;
      ++produced[i - 1];
      ++emitted;
      if (produced[i - 1] == len + 1) {
        done[i - 1] = true;  // this was <eos>
      } else {
        ++content;
      }
      next.emplace_back(i, produced[i - 1]);
    }
    r.emitted_per_step.push_back(emitted);
    r.content_per_step.push_back(content);
    r.active_per_step.push_back(r.established);
    r.steps = t;
    pending = std::move(next);
    bool all = true;
    for (std::size_t k = 0; k < done.size(); ++k)
      if (stop != Stop::kAllTargets || static_cast<int>(k) < n) all = all && done[k];
    const bool finished = stop == Stop::kAllEstablished ? all
                          : stop == Stop::kTerminator  ? all && r.established == n + 1
                                                       : all && r.established >= n;
    if (finished) {
      // The final <eos> tokens are part of the sequence but never consumed
      // during decoding; record them as fed on the following step.
      for (auto [i, j] : pending) r.fed.push_back({i, j, t + 1});
      break;
    }
  }
  return r;
}

// Visibility from the replay: a key is visible to a query when the decoder
// had consumed it no later than the query and it belongs to a subsequence
// that is not newer than the query's.
inline bool visible(const FedToken& query, const FedToken& key) {
  return key.fed_at <= query.fed_at && key.subseq <= query.subseq;
}

}  // namespace oracle
