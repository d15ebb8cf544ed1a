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

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "pipedec/simd.hpp"

namespace pipedec::simd {
namespace {

Isa detect() {
  if (const char* env = std::getenv("PIPEDEC_SIMD")) {
    if (std::string(env) == "scalar") return Isa::kScalar;
  }
  return isa_supported(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

bool isa_supported(Isa isa) {
  if (isa == Isa::kScalar) return true;
#if defined(__x86_64__) || defined(_M_X64)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("ISA not supported on this CPU: " +
                                std::string(isa_name(isa)));
  }
  current().store(isa, std::memory_order_relaxed);
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  if (active_isa() == Isa::kAvx2) return avx2::axpy(n, alpha, x, y);
  scalar::axpy(n, alpha, x, y);
}

float dot(const float* a, const float* b, std::size_t n) {
  if (active_isa() == Isa::kAvx2) return avx2::dot(a, b, n);
  return scalar::dot(a, b, n);
}

void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float* a,
              const float* b, float* c) {
  if (active_isa() == Isa::kAvx2) return avx2::gemm_acc(m, n, k, a, b, c);
  scalar::gemm_acc(m, n, k, a, b, c);
}

}  // namespace pipedec::simd
