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

#include "pipedec/vocab.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "pipedec/errors.hpp"

namespace pipedec {

Vocab::Vocab() {
  for (const char* t : {"<pad>", "<bos>", "<eos>", "<sep>", "<unk>"}) add(t);
}

int Vocab::add(const std::string& token) {
  if (token.empty() || token.find_first_of(" \t\r\n") != std::string::npos) {
    throw DataError("vocabulary tokens must be nonempty and whitespace-free: '" + token + "'");
  }
  auto [it, inserted] = ids_.emplace(token, size());
  if (inserted) tokens_.push_back(token);
  return it->second;
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocab::contains(const std::string& token) const { return ids_.count(token) != 0; }

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) {
    throw EncodingError("token id " + std::to_string(id) + " outside vocabulary of " +
                        std::to_string(size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(std::span<const std::string> tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocab::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

std::string Vocab::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

void Vocab::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write vocabulary file " + path.string());
  os << serialize();
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open vocabulary file " + path.string());
  Vocab v;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    if (lineno < kNumReserved) {
      if (line != v.tokens_[static_cast<std::size_t>(lineno)]) {
        throw DataError("vocabulary line " + std::to_string(lineno + 1) +
                        " must be reserved token " + v.tokens_[static_cast<std::size_t>(lineno)]);
      }
    } else {
      if (v.contains(line)) {
        throw DataError("duplicate vocabulary token on line " + std::to_string(lineno + 1));
      }
      v.add(line);
    }
    ++lineno;
  }
  if (lineno < kNumReserved) throw DataError("vocabulary file is missing reserved tokens");
  return v;
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : serialize()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string Vocab::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

}  // namespace pipedec
