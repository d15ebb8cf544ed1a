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

// Inner-loop kernels: a portable scalar reference and an AVX2/FMA variant,
// selected once at runtime. All matrices are dense row-major.

#include <cstddef>
#include <string_view>

namespace pipedec::simd {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);
bool isa_supported(Isa isa);

// The ISA used by the dispatching entry points below. Chosen on first use:
// AVX2 when the CPU reports avx2+fma, unless PIPEDEC_SIMD=scalar is set.
Isa active_isa();
// Overrides the dispatch choice (tests and benchmarks). Throws if unsupported.
void set_active_isa(Isa isa);

// y[i] += alpha * x[i]
void axpy(std::size_t n, float alpha, const float* x, float* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);

float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);

// C[M,N] += A[M,K] * B[K,N]. Each output element accumulates over k in
// ascending order, so results do not depend on M.
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float* a,
              const float* b, float* c);
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a,
              const double* b, double* c);

namespace scalar {
void axpy(std::size_t n, float alpha, const float* x, float* y);
float dot(const float* a, const float* b, std::size_t n);
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float* a,
              const float* b, float* c);
}  // namespace scalar

namespace avx2 {
void axpy(std::size_t n, float alpha, const float* x, float* y);
float dot(const float* a, const float* b, std::size_t n);
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float* a,
              const float* b, float* c);
}  // namespace avx2

}  // namespace pipedec::simd
