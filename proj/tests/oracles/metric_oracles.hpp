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

// Brute-force reference implementations: enumerate every substring or
// subsequence instead of running a dynamic program.

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

namespace oracle {

inline int lcsubstr(const std::string& a, const std::string& b) {
  int best = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t len = 1; i + len <= a.size(); ++len)
      if (b.find(a.substr(i, len)) != std::string::npos) best = std::max(best, static_cast<int>(len));
  return best;
}

inline bool is_subsequence(const std::vector<std::string>& small, const std::vector<std::string>& big) {
  std::size_t k = 0;
  for (const auto& w : big)
    if (k < small.size() && small[k] == w) ++k;
  return k == small.size();
}

// Tries every subset of `a` (so |a| must stay small).
inline int lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  int best = 0;
  const unsigned subsets = 1u << a.size();
  for (unsigned m = 0; m < subsets; ++m) {
    std::vector<std::string> pick;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (m & (1u << i)) pick.push_back(a[i]);
    if (static_cast<int>(pick.size()) > best && is_subsequence(pick, b)) best = static_cast<int>(pick.size());
  }
  return best;
}

inline double f1(double p, double r) { return p + r == 0 ? 0.0 : 2 * p * r / (p + r); }

inline std::vector<std::string> unique(std::vector<std::string> v) {
  std::vector<std::string> out;
  for (auto& s : v)
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  return out;
}

inline double em(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  const auto p = unique(pred), g = unique(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  int hit = 0;
  for (const auto& x : p)
    for (const auto& y : g) hit += x == y;
  return f1(double(hit) / p.size(), double(hit) / g.size());
}

inline double pm(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  double p = 0, r = 0;
  for (const auto& x : pred) {
    int best = 0;
    for (const auto& y : gold) best = std::max(best, lcsubstr(x, y));
    p += x.empty() ? 0.0 : double(best) / x.size();
  }
  for (const auto& y : gold) {
    int best = 0;
    for (const auto& x : pred) best = std::max(best, lcsubstr(y, x));
    r += y.empty() ? 0.0 : double(best) / y.size();
  }
  return f1(p / pred.size(), r / gold.size());
}

// Keyphrase F1 with `slots` fixed denominators (0 means use the list size).
inline double keyphrase(const std::vector<std::string>& pred, const std::vector<std::string>& gold,
                        int slots) {
  auto p = unique(pred);
  const auto g = unique(gold);
  if (p.empty() || g.empty()) return 0.0;
  if (slots > 0 && static_cast<int>(p.size()) > slots) p.resize(slots);
  int hit = 0;
  for (const auto& x : p)
    for (const auto& y : g) hit += x == y;
  const double denom = slots > 0 ? slots : p.size();
  return f1(hit / denom, double(hit) / g.size());
}

inline double rouge_n(const std::vector<std::string>& p, const std::vector<std::string>& g, int n) {
  auto grams = [n](const std::vector<std::string>& w) {
    std::vector<std::vector<std::string>> out;
    for (std::size_t i = 0; i + n <= w.size(); ++i) out.emplace_back(w.begin() + i, w.begin() + i + n);
    return out;
  };
  auto pg = grams(p), gg = grams(g);
  if (pg.empty() && gg.empty()) return 1.0;
  if (pg.empty() || gg.empty()) return 0.0;
  // Greedy one-to-one pairing of equal grams equals the clipped count.
  std::vector<bool> used(gg.size(), false);
  int hit = 0;
  for (const auto& x : pg)
    for (std::size_t k = 0; k < gg.size(); ++k)
      if (!used[k] && gg[k] == x) {
        used[k] = true;
        ++hit;
        break;
      }
  return f1(double(hit) / pg.size(), double(hit) / gg.size());
}

inline double rouge_l(const std::vector<std::string>& p, const std::vector<std::string>& g) {
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  const int l = lcs(p, g);
  return f1(double(l) / p.size(), double(l) / g.size());
}

}  // namespace oracle
