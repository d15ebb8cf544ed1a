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

#include <doctest.h>

#include <random>

#include "oracles/metric_oracles.hpp"
#include "pipedec/metrics.hpp"

using namespace pipedec;
using Strings = std::vector<std::string>;

namespace {

// Every string over `alphabet` with length <= max_len.
Strings all_strings(const std::string& alphabet, int max_len) {
  Strings out{""};
  Strings frontier{""};
  for (int l = 1; l <= max_len; ++l) {
    Strings next;
    for (const auto& s : frontier)
      for (char c : alphabet) next.push_back(s + c);
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

std::vector<Strings> all_subsets(const Strings& universe, std::size_t max_size) {
  std::vector<Strings> out;
  for (unsigned m = 0; m < (1u << universe.size()); ++m) {
    Strings s;
    for (std::size_t i = 0; i < universe.size(); ++i)
      if (m & (1u << i)) s.push_back(universe[i]);
    if (s.size() <= max_size) out.push_back(s);
  }
  return out;
}

Strings words_of(const std::string& s) {
  Strings w;
  for (char c : s) w.push_back(std::string(1, c));
  return w;
}

std::string spaced(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (!out.empty()) out += ' ';
    out += c;
  }
  return out;
}

}  // namespace

TEST_CASE("em examples") {
  const Strings ab{"a", "b"}, bc{"b", "c"}, xy{"x", "y"}, none{};
  const auto r = em_f1(ab, bc);
  CHECK(r.precision == doctest::Approx(0.5));
  CHECK(r.recall == doctest::Approx(0.5));
  CHECK(r.f1 == doctest::Approx(0.5));
  CHECK(em_f1(ab, ab).f1 == 1.0);
  CHECK(em_f1(ab, xy).f1 == 0.0);
  CHECK(em_f1(none, none).f1 == 1.0);
  CHECK(em_f1(none, ab).f1 == 0.0);
  CHECK(em_f1(ab, none).f1 == 0.0);
}

TEST_CASE("pm examples") {
  const Strings p{"go to start"}, g{"go to start menu"};
  const auto r = pm_f1(p, g);
  CHECK(r.recall == doctest::Approx(11.0 / 16.0));
  CHECK(r.precision == doctest::Approx(1.0));
  CHECK(pm_f1(p, p).f1 == 1.0);
  CHECK(pm_f1(Strings{"abc"}, Strings{"xyz"}).f1 == 0.0);
  CHECK(longest_common_substring("go to start", "go to start menu") == 11);
}

TEST_CASE("keyphrase examples") {
  const Strings five{"a", "b", "c", "d", "e"};
  CHECK(f1_at_k(five, five, 5) == doctest::Approx(1.0));
  const Strings two{"a", "b"};
  CHECK(f1_at_k(two, two, 5) == doctest::Approx(4.0 / 7.0));
  CHECK(f1_at_m(two, two) == doctest::Approx(1.0));
  CHECK(f1_at_k(Strings{}, two, 5) == 0.0);
  CHECK(f1_at_m(Strings{}, two) == 0.0);
  CHECK(f1_at_m(Strings{"Deep  Learning"}, Strings{"deep learning"}) == 1.0);
  CHECK(normalize_phrase("  A\tB  c ") == "a b c");
  CHECK_THROWS_AS(f1_at_k(two, two, 0), ContractError);
}

TEST_CASE("rouge examples") {
  CHECK(rouge_n("a b c", "a c d", 1) == doctest::Approx(2.0 / 3.0));
  CHECK(rouge_l("a b c", "a c d") == doctest::Approx(2.0 / 3.0));
  CHECK(rouge_n("a b c", "a b c", 2) == 1.0);
  CHECK(rouge_l("x y", "x y") == 1.0);
  CHECK(rouge_n("a b", "c d", 1) == 0.0);
  CHECK(rouge_l("a b", "c d") == 0.0);
  CHECK(rouge_n("a a a", "a", 1) == doctest::Approx(2 * (1.0 / 3) * 1 / (1.0 / 3 + 1)));
  CHECK_THROWS_AS(rouge_n("a", "a", 3), ContractError);
}

TEST_CASE("string metrics agree with brute force on every short string pair") {
  const auto strs = all_strings("ab", 6);
  int mismatches = 0;
  for (const auto& a : strs) {
    for (const auto& b : strs) {
      mismatches += longest_common_substring(a, b) != oracle::lcsubstr(a, b);
      const auto wa = words_of(a), wb = words_of(b);
      mismatches += longest_common_subsequence(wa, wb) != oracle::lcs(wa, wb);
      const std::string sa = spaced(a), sb = spaced(b);
      for (int n : {1, 2}) mismatches += std::abs(rouge_n(sa, sb, n) - oracle::rouge_n(wa, wb, n)) > 1e-12;
      mismatches += std::abs(rouge_l(sa, sb) - oracle::rouge_l(wa, wb)) > 1e-12;
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("set metrics agree with brute force on every small set pair") {
  const Strings universe{"ab", "ba", "abc", "c", "bca"};
  const auto subsets = all_subsets(universe, 4);
  int mismatches = 0;
  for (const auto& p : subsets) {
    for (const auto& g : subsets) {
      mismatches += std::abs(em_f1(p, g).f1 - oracle::em(p, g)) > 1e-12;
      mismatches += std::abs(pm_f1(p, g).f1 - oracle::pm(p, g)) > 1e-12;
      mismatches += std::abs(f1_at_k(p, g, 5) - oracle::keyphrase(p, g, 5)) > 1e-12;
      mismatches += std::abs(f1_at_k(p, g, 2) - oracle::keyphrase(p, g, 2)) > 1e-12;
      mismatches += std::abs(f1_at_m(p, g) - oracle::keyphrase(p, g, 0)) > 1e-12;
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("metric values stay in range") {
  std::mt19937 rng(8);
  const auto strs = all_strings("abc", 4);
  for (int i = 0; i < 2000; ++i) {
    const Strings p{strs[rng() % strs.size()], strs[rng() % strs.size()]};
    const Strings g{strs[rng() % strs.size()]};
    for (double v : {em_f1(p, g).f1, pm_f1(p, g).f1, f1_at_k(p, g, 5), f1_at_m(p, g),
                     rouge_n(spaced(p[0]), spaced(g[0]), 1), rouge_l(spaced(p[0]), spaced(g[0]))}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}
