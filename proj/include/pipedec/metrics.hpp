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

#include <span>
#include <string>
#include <vector>

#include "pipedec/errors.hpp"

namespace pipedec {

struct Prf {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

double harmonic(double p, double r);

// Set-based exact match. Duplicates collapse.
Prf em_f1(std::span<const std::string> predicted, std::span<const std::string> gold);

// Character-level longest common substring credit per prediction and per
// gold string, averaged into precision and recall.
Prf pm_f1(std::span<const std::string> predicted, std::span<const std::string> gold);

int longest_common_substring(const std::string& a, const std::string& b);

// Lowercase and collapse whitespace.
std::string normalize_phrase(const std::string& s);

// Keeps the first k normalized, deduplicated predictions and scores them as
// if there were always k (missing slots count as wrong). Requires k >= 1.
double f1_at_k(std::span<const std::string> predicted, std::span<const std::string> gold, int k);
double f1_at_m(std::span<const std::string> predicted, std::span<const std::string> gold);

// Clipped n-gram overlap F1 over whitespace words. Requires n in {1, 2}.
double rouge_n(const std::string& predicted, const std::string& gold, int n);
// Word-level longest common subsequence F1.
double rouge_l(const std::string& predicted, const std::string& gold);

int longest_common_subsequence(std::span<const std::string> a, std::span<const std::string> b);

}  // namespace pipedec
