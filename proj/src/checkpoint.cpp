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

#include "pipedec/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace pipedec {
namespace {

constexpr std::array<char, 8> kMagic = {'P', 'D', 'C', 'K', 'P', 'T', '\0', '\1'};

template <typename U>
void write_pod(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U read_pod(std::istream& is, const std::filesystem::path& path) {
  U v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!is) throw CheckpointError("truncated checkpoint header: " + path.string());
  return v;
}

template <typename S, typename T>
std::vector<T> read_values(std::istream& is, std::size_t count,
                           const std::filesystem::path& path) {
  std::vector<S> raw(count);
  is.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(count * sizeof(S)));
  if (!is) throw CheckpointError("truncated checkpoint data: " + path.string());
  return std::vector<T>(raw.begin(), raw.end());
}

}  // namespace

template <typename T>
const Parameter<T>* Checkpoint<T>::find(const std::string& name) const {
  for (const auto& p : tensors) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<const Parameter<T>*>& params,
                     const nlohmann::json& meta) {
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const Parameter<T>* p : params) {
    table.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"offset", offset}});
    offset += p->value.size();
  }
  nlohmann::json header = {{"meta", meta}, {"tensors", table}};
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic.data(), kMagic.size());
  write_pod<std::uint32_t>(os, kCheckpointVersion);
  write_pod<std::uint32_t>(os, sizeof(T));
  write_pod<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Parameter<T>* p : params) {
    os.write(reinterpret_cast<const char*>(p->value.data()),
             static_cast<std::streamsize>(p->value.size() * sizeof(T)));
  }
  if (!os) throw CheckpointError("failed writing checkpoint: " + path.string());
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw CheckpointError("not a checkpoint file: " + path.string());
  const auto version = read_pod<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto width = read_pod<std::uint32_t>(is, path);
  if (width != 4 && width != 8) {
    throw CheckpointError("unsupported float width " + std::to_string(width));
  }
  const auto header_len = read_pod<std::uint64_t>(is, path);
  std::string text(header_len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw CheckpointError("truncated checkpoint header: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("corrupt checkpoint header: " + std::string(e.what()));
  }

  Checkpoint<T> ckpt;
  ckpt.meta = header.at("meta");
  ckpt.stored_float_width = static_cast<int>(width);
  for (const auto& entry : header.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    const std::size_t count = shape_numel(shape);
    std::vector<T> values = width == 4 ? read_values<float, T>(is, count, path)
                                       : read_values<double, T>(is, count, path);
    ckpt.tensors.emplace_back(entry.at("name").get<std::string>(),
                              Tensor<T>(std::move(shape), std::move(values)));
  }
  return ckpt;
}

template struct Checkpoint<float>;
template struct Checkpoint<double>;
template void save_checkpoint<float>(const std::filesystem::path&,
                                     const std::vector<const Parameter<float>*>&,
                                     const nlohmann::json&);
template void save_checkpoint<double>(const std::filesystem::path&,
                                      const std::vector<const Parameter<double>*>&,
                                      const nlohmann::json&);
template Checkpoint<float> load_checkpoint<float>(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace pipedec
