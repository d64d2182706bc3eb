/*
 * Copyright 2026 The hart-cpp authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

// Serial reference kernels: the obviously-correct naive loops, written
// independently of hart/kernels.hpp. Kept for parity tests and the
// bench_kernels comparison target; never used on the production path.
namespace hart::kernels::ref {

template <typename T>
void matmul(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N,
            bool transA, bool transB) {
  for (int64_t i = 0; i < M; ++i) {
    for (int64_t j = 0; j < N; ++j) {
      T acc = 0;
      for (int64_t k = 0; k < K; ++k) {
        const T a = transA ? A[k * M + i] : A[i * K + k];
        const T b = transB ? B[j * K + k] : B[k * N + j];
        acc += a * b;
      }
      C[i * N + j] = acc;
    }
  }
}

template <typename T>
void bmm(const T* A, const T* B, T* C, int64_t G, int64_t M, int64_t K,
         int64_t N, bool transA, bool transB) {
  for (int64_t g = 0; g < G; ++g)
    matmul(A + g * M * K, B + g * K * N, C + g * M * N, M, K, N, transA, transB);
}

// im2col-then-matmul conv1d oracle for groups == 1 (the contract the spec
// names); direct loops otherwise.
template <typename T>
void conv1d(const T* x, const T* w, const T* bias, T* y, int64_t B, int64_t Tin,
            int64_t Cin, int64_t K, int64_t Cout, int64_t stride, int64_t padL,
            int64_t To, int groups) {
  const int64_t cing = Cin / groups, coutg = Cout / groups;
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t to = 0; to < To; ++to) {
      for (int64_t c = 0; c < Cout; ++c) {
        const int64_t g = c / coutg;
        T acc = bias ? bias[c] : T(0);
        for (int64_t k = 0; k < K; ++k) {
          const int64_t ti = to * stride + k - padL;
          if (ti < 0 || ti >= Tin) continue;
          for (int64_t j = 0; j < cing; ++j)
            acc += x[(b * Tin + ti) * Cin + g * cing + j] * w[(k * cing + j) * Cout + c];
        }
        y[(b * To + to) * Cout + c] = acc;
      }
    }
  }
}

template <typename T>
void softmax_rows(const T* x, T* y, int64_t rows, int64_t n) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * n;
    T* yr = y + r * n;
    T mx = *std::max_element(xr, xr + n);
    T sum = 0;
    for (int64_t k = 0; k < n; ++k) sum += std::exp(xr[k] - mx);
    for (int64_t k = 0; k < n; ++k) yr[k] = std::exp(xr[k] - mx) / sum;
  }
}

template <typename T>
void layernorm(const T* x, const T* gamma, const T* beta, T* y, int64_t rows,
               int64_t d, T eps) {
  for (int64_t r = 0; r < rows; ++r) {
    T mu = 0, var = 0;
    for (int64_t c = 0; c < d; ++c) mu += x[r * d + c];
    mu /= static_cast<T>(d);
    for (int64_t c = 0; c < d; ++c) {
      const T v = x[r * d + c] - mu;
      var += v * v;
    }
    var /= static_cast<T>(d);
    for (int64_t c = 0; c < d; ++c)
      y[r * d + c] = (x[r * d + c] - mu) / std::sqrt(var + eps) * gamma[c] + beta[c];
  }
}

}  // namespace hart::kernels::ref
