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

// Binary checkpoint: 8-byte magic, u32 format version, u32 float width in
// bytes, u64 header length, a JSON header (caller metadata plus a tensor
// table of name/shape/offset), then raw little-endian values.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pipedec/tensor.hpp"

namespace pipedec {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
  nlohmann::json meta;
  int stored_float_width = 0;
  std::vector<Parameter<T>> tensors;

  const Parameter<T>* find(const std::string& name) const;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<const Parameter<T>*>& params,
                     const nlohmann::json& meta);

// Values stored at the other float width are converted on load.
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace pipedec
