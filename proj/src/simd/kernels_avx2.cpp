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

#include <cmath>

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#define PIPEDEC_X86 1
#else
#define PIPEDEC_X86 0
#endif

namespace pipedec::simd::avx2 {

#if PIPEDEC_X86

#define PIPEDEC_AVX2 __attribute__((target("avx2,fma")))

namespace {

PIPEDEC_AVX2 inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

// R rows by 16 columns: each B vector is loaded once per k and reused for
// every row. Column tails use one vector, then scalar FMAs.
template <int R>
PIPEDEC_AVX2 void gemm_tile(std::size_t n, std::size_t k, const float* a, const float* b,
                            float* c) {
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) {
    __m256 lo[R], hi[R];
#pragma GCC unroll 4
    for (int r = 0; r < R; ++r) {
      lo[r] = _mm256_loadu_ps(c + r * n + j);
      hi[r] = _mm256_loadu_ps(c + r * n + j + 8);
    }
    for (std::size_t p = 0; p < k; ++p) {
      const __m256 b0 = _mm256_loadu_ps(b + p * n + j);
      const __m256 b1 = _mm256_loadu_ps(b + p * n + j + 8);
#pragma GCC unroll 4
      for (int r = 0; r < R; ++r) {
        const __m256 av = _mm256_set1_ps(a[r * k + p]);
        lo[r] = _mm256_fmadd_ps(av, b0, lo[r]);
        hi[r] = _mm256_fmadd_ps(av, b1, hi[r]);
      }
    }
#pragma GCC unroll 4
    for (int r = 0; r < R; ++r) {
      _mm256_storeu_ps(c + r * n + j, lo[r]);
      _mm256_storeu_ps(c + r * n + j + 8, hi[r]);
    }
  }
  for (; j + 8 <= n; j += 8) {
    __m256 acc[R];
#pragma GCC unroll 4
    for (int r = 0; r < R; ++r) acc[r] = _mm256_loadu_ps(c + r * n + j);
    for (std::size_t p = 0; p < k; ++p) {
      const __m256 bv = _mm256_loadu_ps(b + p * n + j);
#pragma GCC unroll 4
      for (int r = 0; r < R; ++r) {
        acc[r] = _mm256_fmadd_ps(_mm256_set1_ps(a[r * k + p]), bv, acc[r]);
      }
    }
#pragma GCC unroll 4
    for (int r = 0; r < R; ++r) _mm256_storeu_ps(c + r * n + j, acc[r]);
  }
  for (; j < n; ++j) {
    for (int r = 0; r < R; ++r) {
      float acc = c[r * n + j];
      for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[r * k + p], b[p * n + j], acc);
      c[r * n + j] = acc;
    }
  }
}

}  // namespace

PIPEDEC_AVX2 void axpy(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i),
                                            _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

PIPEDEC_AVX2 float dot(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8),
                           _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  }
  float sum = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) sum = std::fma(a[i], b[i], sum);
  return sum;
}

// Four-row tiles, then a single tile for the remaining one to three rows.
// Pipelined decode steps usually have fewer than four rows.
PIPEDEC_AVX2 void gemm_acc(std::size_t m, std::size_t n, std::size_t k,
                           const float* a, const float* b, float* c) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) gemm_tile<4>(n, k, a + i * k, b, c + i * n);
  switch (m - i) {
    case 3: gemm_tile<3>(n, k, a + i * k, b, c + i * n); break;
    case 2: gemm_tile<2>(n, k, a + i * k, b, c + i * n); break;
    case 1: gemm_tile<1>(n, k, a + i * k, b, c + i * n); break;
    default: break;
  }
}

#else  // !PIPEDEC_X86

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  scalar::axpy(n, alpha, x, y);
}
float dot(const float* a, const float* b, std::size_t n) {
  return scalar::dot(a, b, n);
}
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float* a,
              const float* b, float* c) {
  scalar::gemm_acc(m, n, k, a, b, c);
}

#endif

}  // namespace pipedec::simd::avx2
