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

#include "pipedec/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

#include "pipedec/errors.hpp"

namespace pipedec {
namespace {

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(std::move(w));
  return out;
}

std::map<std::vector<std::string>, int> ngrams(const std::vector<std::string>& w, int n) {
  std::map<std::vector<std::string>, int> out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= w.size(); ++i) {
    ++out[std::vector<std::string>(w.begin() + static_cast<long>(i),
                                   w.begin() + static_cast<long>(i) + n)];
  }
  return out;
}

// Both sides empty counts as a perfect match, one side empty as a miss.
bool empty_case(std::size_t a, std::size_t b, double* score) {
  if (a != 0 && b != 0) return false;
  *score = (a == 0 && b == 0) ? 1.0 : 0.0;
  return true;
}

}  // namespace

double harmonic(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

Prf em_f1(std::span<const std::string> predicted, std::span<const std::string> gold) {
  const std::set<std::string> p(predicted.begin(), predicted.end());
  const std::set<std::string> g(gold.begin(), gold.end());
  double s = 0;
  if (empty_case(p.size(), g.size(), &s)) return {s, s, s};
  double hits = 0;
  for (const auto& x : p) hits += g.count(x);
  Prf r{hits / static_cast<double>(p.size()), hits / static_cast<double>(g.size()), 0};
  r.f1 = harmonic(r.precision, r.recall);
  return r;
}

int longest_common_substring(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  int best = 0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : 0;
      best = std::max(best, cur[j]);
    }
    std::swap(prev, cur);
  }
  return best;
}

Prf pm_f1(std::span<const std::string> predicted, std::span<const std::string> gold) {
  double s = 0;
  if (empty_case(predicted.size(), gold.size(), &s)) return {s, s, s};
  auto credit = [](const std::string& x, std::span<const std::string> others) {
    if (x.empty()) return 0.0;
    int best = 0;
    for (const auto& o : others) best = std::max(best, longest_common_substring(x, o));
    return static_cast<double>(best) / static_cast<double>(x.size());
  };
  Prf r;
  for (const auto& p : predicted) r.precision += credit(p, gold);
  for (const auto& g : gold) r.recall += credit(g, predicted);
  r.precision /= static_cast<double>(predicted.size());
  r.recall /= static_cast<double>(gold.size());
  r.f1 = harmonic(r.precision, r.recall);
  return r;
}

std::string normalize_phrase(const std::string& s) {
  std::string out;
  for (const auto& w : words(s)) {
    if (!out.empty()) out += ' ';
    for (char c : w) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

namespace {

double keyphrase_f1(std::span<const std::string> predicted, std::span<const std::string> gold,
                    int k) {
  std::set<std::string> g;
  for (const auto& x : gold) g.insert(normalize_phrase(x));
  std::vector<std::string> p;
  std::set<std::string> seen;
  for (const auto& x : predicted) {
    std::string n = normalize_phrase(x);
    if (seen.insert(n).second) p.push_back(std::move(n));
  }
  if (p.empty() || g.empty()) return 0.0;
  if (k > 0 && p.size() > static_cast<std::size_t>(k)) p.resize(static_cast<std::size_t>(k));
  const double slots = k > 0 ? k : static_cast<double>(p.size());
  double hits = 0;
  for (const auto& x : p) hits += g.count(x);
  return harmonic(hits / slots, hits / static_cast<double>(g.size()));
}

}  // namespace

double f1_at_k(std::span<const std::string> predicted, std::span<const std::string> gold, int k) {
  if (k < 1) throw ContractError("f1_at_k needs k >= 1");
  return keyphrase_f1(predicted, gold, k);
}

double f1_at_m(std::span<const std::string> predicted, std::span<const std::string> gold) {
  return keyphrase_f1(predicted, gold, 0);
}

double rouge_n(const std::string& predicted, const std::string& gold, int n) {
  if (n != 1 && n != 2) throw ContractError("rouge_n supports n = 1 or 2");
  const auto p = ngrams(words(predicted), n);
  const auto g = ngrams(words(gold), n);
  long np = 0, ng = 0, overlap = 0;
  for (const auto& [gram, c] : p) {
    np += c;
    if (auto it = g.find(gram); it != g.end()) overlap += std::min(c, it->second);
  }
  for (const auto& [gram, c] : g) ng += c;
  double s = 0;
  if (empty_case(static_cast<std::size_t>(np), static_cast<std::size_t>(ng), &s)) return s;
  return harmonic(static_cast<double>(overlap) / static_cast<double>(np),
                  static_cast<double>(overlap) / static_cast<double>(ng));
}

int longest_common_subsequence(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const std::string& predicted, const std::string& gold) {
  const auto p = words(predicted);
  const auto g = words(gold);
  double s = 0;
  if (empty_case(p.size(), g.size(), &s)) return s;
  const double lcs = longest_common_subsequence(p, g);
  return harmonic(lcs / static_cast<double>(p.size()), lcs / static_cast<double>(g.size()));
}

}  // namespace pipedec
