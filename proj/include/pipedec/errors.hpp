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

#include <stdexcept>
#include <string>

namespace pipedec {

// Each error family maps to one failure class named in the module contracts.
#define PIPEDEC_DEFINE_ERROR(Name)                                   \
  class Name : public std::runtime_error {                           \
   public:                                                           \
    explicit Name(const std::string& what) : std::runtime_error(what) {} \
  };

PIPEDEC_DEFINE_ERROR(DimensionError)
PIPEDEC_DEFINE_ERROR(DegenerateRowError)
PIPEDEC_DEFINE_ERROR(ContractError)
PIPEDEC_DEFINE_ERROR(TrainingDivergence)
PIPEDEC_DEFINE_ERROR(LayoutError)
PIPEDEC_DEFINE_ERROR(EncodingError)
PIPEDEC_DEFINE_ERROR(DataError)
PIPEDEC_DEFINE_ERROR(IngestionError)
PIPEDEC_DEFINE_ERROR(SpecError)
PIPEDEC_DEFINE_ERROR(ConfigError)
PIPEDEC_DEFINE_ERROR(CheckpointError)
PIPEDEC_DEFINE_ERROR(ConsistencyError)

#undef PIPEDEC_DEFINE_ERROR

}  // namespace pipedec
