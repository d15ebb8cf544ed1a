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
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pipedec/errors.hpp"

namespace pipedec {

// Token <-> id map. Ids 0..4 are always <pad>, <bos>, <eos>, <sep>, <unk>.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kSep = 3;
  static constexpr int kUnk = 4;
  static constexpr int kNumReserved = 5;

  Vocab();

  // Returns the id of `token`, appending it if new.
  int add(const std::string& token);
  // Unknown tokens map to kUnk.
  int id(const std::string& token) const;
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  static bool is_reserved(int id) { return id >= 0 && id < kNumReserved; }

  std::vector<int> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const int> ids) const;

  // One token per line; line number is the id.
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  // FNV-1a over the serialized form.
  std::uint64_t hash() const;
  std::string hash_hex() const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace pipedec
