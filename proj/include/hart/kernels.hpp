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

#include "hart/threading.hpp"

// OpenMP kernels. Every kernel parallelizes over independent output elements
// only; the reduction order inside one output element is fixed, so results
// are bit-identical for any thread count (threads(1) is the serial reference
// execution of the same loops; hart::kernels::ref holds independently written
// naive versions for testing).
namespace hart::kernels {

// ---------------------------------------------------------------------------
// Matmul: C[M,N] = op(A) * op(B), op selected by transA/transB (TT unused).
// A is [M,K] (or [K,M] when transposed), B is [K,N] (or [N,K]).
// ---------------------------------------------------------------------------
template <typename T>
void matmul(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N,
            bool transA, bool transB) {
  const bool par = parallel_worth(M * K * N);
  if (!transA && !transB) {
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < M; ++i) {
      T* c = C + i * N;
      std::fill(c, c + N, T(0));
      const T* a = A + i * K;
      for (int64_t k = 0; k < K; ++k) {
        const T av = a[k];
        const T* b = B + k * N;
        for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
      }
    }
  } else if (!transA && transB) {
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < M; ++i) {
      const T* a = A + i * K;
      T* c = C + i * N;
      for (int64_t j = 0; j < N; ++j) {
        const T* b = B + j * K;
        T acc = 0;
        for (int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
        c[j] = acc;
      }
    }
  } else {  // transA && !transB
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < M; ++i) {
      T* c = C + i * N;
      std::fill(c, c + N, T(0));
      for (int64_t k = 0; k < K; ++k) {
        const T av = A[k * M + i];
        const T* b = B + k * N;
        for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
      }
    }
  }
}

// Batched matmul over G independent slices.
template <typename T>
void bmm(const T* A, const T* B, T* C, int64_t G, int64_t M, int64_t K,
         int64_t N, bool transA, bool transB) {
  const int64_t sa = M * K, sb = K * N, sc = M * N;
  const bool par = parallel_worth(G * M * K * N);
#pragma omp parallel for schedule(static) if (par)
  for (int64_t g = 0; g < G; ++g) {
    const T* a = A + g * sa;
    const T* b = B + g * sb;
    T* c = C + g * sc;
    if (!transA && !transB) {
      for (int64_t i = 0; i < M; ++i) {
        T* cr = c + i * N;
        std::fill(cr, cr + N, T(0));
        for (int64_t k = 0; k < K; ++k) {
          const T av = a[i * K + k];
          const T* br = b + k * N;
          for (int64_t j = 0; j < N; ++j) cr[j] += av * br[j];
        }
      }
    } else if (!transA && transB) {
      for (int64_t i = 0; i < M; ++i) {
        const T* ar = a + i * K;
        T* cr = c + i * N;
        for (int64_t j = 0; j < N; ++j) {
          const T* br = b + j * K;
          T acc = 0;
          for (int64_t k = 0; k < K; ++k) acc += ar[k] * br[k];
          cr[j] = acc;
        }
      }
    } else {  // transA && !transB: C[i,j] = sum_k a[k*M+i] b[k*N+j]
      for (int64_t i = 0; i < M; ++i) {
        T* cr = c + i * N;
        std::fill(cr, cr + N, T(0));
        for (int64_t k = 0; k < K; ++k) {
          const T av = a[k * M + i];
          const T* br = b + k * N;
          for (int64_t j = 0; j < N; ++j) cr[j] += av * br[j];
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// conv1d, channels-last. x: [B,T,Cin], w: [K, Cin/groups, Cout], y: [B,To,Cout].
// Output position t reads input rows t*stride + k - padL for k in [0,K).
// ---------------------------------------------------------------------------
template <typename T>
void conv1d_forward(const T* x, const T* w, const T* bias, T* y, int64_t B,
                    int64_t Tin, int64_t Cin, int64_t K, int64_t Cout,
                    int64_t stride, int64_t padL, int64_t To, int groups) {
  const int64_t cing = Cin / groups, coutg = Cout / groups;
  const bool par = parallel_worth(B * To * K * Cin * coutg);
#pragma omp parallel for collapse(2) schedule(static) if (par)
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t to = 0; to < To; ++to) {
      T* yr = y + (b * To + to) * Cout;
      if (bias)
        std::copy(bias, bias + Cout, yr);
      else
        std::fill(yr, yr + Cout, T(0));
      for (int64_t k = 0; k < K; ++k) {
        const int64_t ti = to * stride + k - padL;
        if (ti < 0 || ti >= Tin) continue;
        const T* xr = x + (b * Tin + ti) * Cin;
        const T* wk = w + k * cing * Cout;
        for (int g = 0; g < groups; ++g) {
          const int64_t c0 = g * coutg;
          for (int64_t j = 0; j < cing; ++j) {
            const T xv = xr[g * cing + j];
            const T* wr = wk + j * Cout + c0;
            for (int64_t c = 0; c < coutg; ++c) yr[c0 + c] += xv * wr[c];
          }
        }
      }
    }
  }
}

template <typename T>
void conv1d_backward_input(const T* dy, const T* w, T* dx, int64_t B,
                           int64_t Tin, int64_t Cin, int64_t K, int64_t Cout,
                           int64_t stride, int64_t padL, int64_t To,
                           int groups) {
  const int64_t cing = Cin / groups, coutg = Cout / groups;
  const bool par = parallel_worth(B * Tin * K * Cout);
#pragma omp parallel for collapse(2) schedule(static) if (par)
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t ti = 0; ti < Tin; ++ti) {
      T* dxr = dx + (b * Tin + ti) * Cin;
      std::fill(dxr, dxr + Cin, T(0));
      for (int64_t k = 0; k < K; ++k) {
        const int64_t num = ti + padL - k;
        if (num < 0 || num % stride) continue;
        const int64_t to = num / stride;
        if (to >= To) continue;
        const T* dyr = dy + (b * To + to) * Cout;
        const T* wk = w + k * cing * Cout;
        for (int g = 0; g < groups; ++g) {
          const int64_t c0 = g * coutg;
          for (int64_t j = 0; j < cing; ++j) {
            const T* wr = wk + j * Cout + c0;
            T acc = 0;
            for (int64_t c = 0; c < coutg; ++c) acc += dyr[c0 + c] * wr[c];
            dxr[g * cing + j] += acc;
          }
        }
      }
    }
  }
}

template <typename T>
void conv1d_backward_weight(const T* x, const T* dy, T* dw, T* db, int64_t B,
                            int64_t Tin, int64_t Cin, int64_t K, int64_t Cout,
                            int64_t stride, int64_t padL, int64_t To,
                            int groups) {
  const int64_t cing = Cin / groups, coutg = Cout / groups;
  const bool par = parallel_worth(K * cing * B * To * coutg);
#pragma omp parallel for collapse(2) schedule(static) if (par)
  for (int64_t k = 0; k < K; ++k) {
    for (int64_t j = 0; j < cing; ++j) {
      T* dwr = dw + (k * cing + j) * Cout;
      std::fill(dwr, dwr + Cout, T(0));
      for (int64_t b = 0; b < B; ++b) {
        for (int64_t to = 0; to < To; ++to) {
          const int64_t ti = to * stride + k - padL;
          if (ti < 0 || ti >= Tin) continue;
          const T* xr = x + (b * Tin + ti) * Cin;
          const T* dyr = dy + (b * To + to) * Cout;
          for (int g = 0; g < groups; ++g) {
            const T xv = xr[g * cing + j];
            const int64_t c0 = g * coutg;
            for (int64_t c = 0; c < coutg; ++c) dwr[c0 + c] += xv * dyr[c0 + c];
          }
        }
      }
    }
  }
  if (db) {
    for (int64_t c = 0; c < Cout; ++c) db[c] = T(0);
    for (int64_t r = 0; r < B * To; ++r) {
      const T* dyr = dy + r * Cout;
      for (int64_t c = 0; c < Cout; ++c) db[c] += dyr[c];
    }
  }
}

// ---------------------------------------------------------------------------
// Softmax over an arbitrary axis expressed as (outer, n, inner) with element
// stride `inner` along the axis. Max-subtracted for stability.
// ---------------------------------------------------------------------------
template <typename T>
void softmax(const T* x, T* y, int64_t outer, int64_t n, int64_t inner) {
  const bool par = parallel_worth(outer * n * inner);
#pragma omp parallel for collapse(2) schedule(static) if (par)
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      const T* xr = x + o * n * inner + i;
      T* yr = y + o * n * inner + i;
      T mx = xr[0];
      for (int64_t k = 1; k < n; ++k) mx = std::max(mx, xr[k * inner]);
      T sum = 0;
      for (int64_t k = 0; k < n; ++k) {
        const T e = std::exp(xr[k * inner] - mx);
        yr[k * inner] = e;
        sum += e;
      }
      const T inv = T(1) / sum;
      for (int64_t k = 0; k < n; ++k) yr[k * inner] *= inv;
    }
  }
}

// dx = y .* (dy - sum(dy .* y)) along the axis.
template <typename T>
void softmax_backward(const T* y, const T* dy, T* dx, int64_t outer, int64_t n,
                      int64_t inner) {
  const bool par = parallel_worth(outer * n * inner);
#pragma omp parallel for collapse(2) schedule(static) if (par)
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      const int64_t base = o * n * inner + i;
      T dot = 0;
      for (int64_t k = 0; k < n; ++k) dot += dy[base + k * inner] * y[base + k * inner];
      for (int64_t k = 0; k < n; ++k) {
        const int64_t p = base + k * inner;
        dx[p] = y[p] * (dy[p] - dot);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Layer norm over the last axis of length d. Population variance.
// ---------------------------------------------------------------------------
template <typename T>
void layernorm_forward(const T* x, const T* gamma, const T* beta, T* y,
                       T* mean, T* invstd, int64_t rows, int64_t d, T eps) {
  const bool par = parallel_worth(rows * d);
#pragma omp parallel for schedule(static) if (par)
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * d;
    T* yr = y + r * d;
    T mu = 0;
    for (int64_t c = 0; c < d; ++c) mu += xr[c];
    mu /= static_cast<T>(d);
    T var = 0;
    for (int64_t c = 0; c < d; ++c) {
      const T v = xr[c] - mu;
      var += v * v;
    }
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    mean[r] = mu;
    invstd[r] = is;
    for (int64_t c = 0; c < d; ++c) yr[c] = (xr[c] - mu) * is * gamma[c] + beta[c];
  }
}

template <typename T>
void layernorm_backward(const T* x, const T* gamma, const T* mean,
                        const T* invstd, const T* dy, T* dx, T* dgamma,
                        T* dbeta, int64_t rows, int64_t d) {
  const bool par = parallel_worth(rows * d);
#pragma omp parallel for schedule(static) if (par)
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * d;
    const T* dyr = dy + r * d;
    T* dxr = dx + r * d;
    const T mu = mean[r], is = invstd[r];
    T s1 = 0, s2 = 0;  // mean(dy*gamma), mean(dy*gamma*xhat)
    for (int64_t c = 0; c < d; ++c) {
      const T dg = dyr[c] * gamma[c];
      const T xh = (xr[c] - mu) * is;
      s1 += dg;
      s2 += dg * xh;
    }
    s1 /= static_cast<T>(d);
    s2 /= static_cast<T>(d);
    for (int64_t c = 0; c < d; ++c) {
      const T dg = dyr[c] * gamma[c];
      const T xh = (xr[c] - mu) * is;
      dxr[c] = (dg - s1 - xh * s2) * is;
    }
  }
  // Column reductions for the affine params, fixed row order per column.
#pragma omp parallel for schedule(static) if (parallel_worth(rows* d))
  for (int64_t c = 0; c < d; ++c) {
    T sg = 0, sb = 0;
    for (int64_t r = 0; r < rows; ++r) {
      const T xh = (x[r * d + c] - mean[r]) * invstd[r];
      sg += dy[r * d + c] * xh;
      sb += dy[r * d + c];
    }
    dgamma[c] = sg;
    dbeta[c] = sb;
  }
}

// ---------------------------------------------------------------------------
// Depthwise conv along the middle axis of x: [B,N,C], kernel shared across
// C/G channel groups: w[G,K], 'same' zero padding (K odd).
// ---------------------------------------------------------------------------
template <typename T>
void shared_dconv_forward(const T* x, const T* w, T* y, int64_t B, int64_t N,
                          int64_t C, int64_t G, int64_t K) {
  const int64_t cg = C / G, h = K / 2;
  const bool par = parallel_worth(B * N * C * K);
#pragma omp parallel for collapse(2) schedule(static) if (par)
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t t = 0; t < N; ++t) {
      T* yr = y + (b * N + t) * C;
      std::fill(yr, yr + C, T(0));
      for (int64_t j = 0; j < K; ++j) {
        const int64_t ti = t + j - h;
        if (ti < 0 || ti >= N) continue;
        const T* xr = x + (b * N + ti) * C;
        for (int64_t g = 0; g < G; ++g) {
          const T wv = w[g * K + j];
          const int64_t c0 = g * cg;
          for (int64_t c = 0; c < cg; ++c) yr[c0 + c] += wv * xr[c0 + c];
        }
      }
    }
  }
}

template <typename T>
void shared_dconv_backward(const T* x, const T* w, const T* dy, T* dx, T* dw,
                           int64_t B, int64_t N, int64_t C, int64_t G,
                           int64_t K) {
  const int64_t cg = C / G, h = K / 2;
  const bool par = parallel_worth(B * N * C * K);
#pragma omp parallel for collapse(2) schedule(static) if (par)
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t ti = 0; ti < N; ++ti) {
      T* dxr = dx + (b * N + ti) * C;
      std::fill(dxr, dxr + C, T(0));
      for (int64_t j = 0; j < K; ++j) {
        const int64_t t = ti - j + h;
        if (t < 0 || t >= N) continue;
        const T* dyr = dy + (b * N + t) * C;
        for (int64_t g = 0; g < G; ++g) {
          const T wv = w[g * K + j];
          const int64_t c0 = g * cg;
          for (int64_t c = 0; c < cg; ++c) dxr[c0 + c] += wv * dyr[c0 + c];
        }
      }
    }
  }
#pragma omp parallel for collapse(2) schedule(static) if (parallel_worth(G* K* B* N* cg))
  for (int64_t g = 0; g < G; ++g) {
    for (int64_t j = 0; j < K; ++j) {
      T acc = 0;
      const int64_t c0 = g * cg;
      for (int64_t b = 0; b < B; ++b) {
        for (int64_t t = 0; t < N; ++t) {
          const int64_t ti = t + j - h;
          if (ti < 0 || ti >= N) continue;
          const T* xr = x + (b * N + ti) * C;
          const T* dyr = dy + (b * N + t) * C;
          for (int64_t c = 0; c < cg; ++c) acc += dyr[c0 + c] * xr[c0 + c];
        }
      }
      dw[g * K + j] = acc;
    }
  }
}

// ---------------------------------------------------------------------------
// Scalar activations.
// ---------------------------------------------------------------------------
template <typename T>
inline T sigmoid_val(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
inline T swish_val(T x) {
  return x * sigmoid_val(x);
}

template <typename T>
inline T swish_grad(T x) {
  const T s = sigmoid_val(x);
  return s * (T(1) + x * (T(1) - s));
}

// Exact erf-based GELU.
template <typename T>
inline T gelu_val(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(M_SQRT1_2)));
}

template <typename T>
inline T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
  const T pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014327);
  return cdf + x * pdf;
}

template <typename T>
inline T sigmoid_grad(T x) {
  const T s = sigmoid_val(x);
  return s * (T(1) - s);
}

}  // namespace hart::kernels
