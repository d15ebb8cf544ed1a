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

#include "pipedec/simd.hpp"

namespace pipedec::simd {
namespace {

template <typename T>
void axpy_ref(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T dot_ref(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void gemm_ref(std::size_t m, std::size_t n, std::size_t k, const T* a,
              const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

namespace scalar {
void axpy(std::size_t n, float alpha, const float* x, float* y) {
  axpy_ref(n, alpha, x, y);
}
float dot(const float* a, const float* b, std::size_t n) {
  return dot_ref(a, b, n);
}
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float* a,
              const float* b, float* c) {
  gemm_ref(m, n, k, a, b, c);
}
}  // namespace scalar

// 64-bit arithmetic exists for gradient verification only and always takes
// the reference path.
void axpy(std::size_t n, double alpha, const double* x, double* y) {
  axpy_ref(n, alpha, x, y);
}
double dot(const double* a, const double* b, std::size_t n) {
  return dot_ref(a, b, n);
}
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a,
              const double* b, double* c) {
  gemm_ref(m, n, k, a, b, c);
}

}  // namespace pipedec::simd
