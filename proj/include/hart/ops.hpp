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

#include <cmath>
#include <string>
#include <vector>

#include "hart/kernels.hpp"
#include "hart/tape.hpp"
#include "hart/tensor.hpp"

// Differentiable tensor operations. Each op computes its value through the
// kernels and, when a tape is active, records a closure that routes the
// output gradient to its parents. Ops whose inputs are all untracked record
// nothing.
namespace hart::ops {

template <typename T>
bool tracked(const CtxT<T>& ctx, std::initializer_list<int> ids) {
  if (!ctx.tape) return false;
  for (int id : ids)
    if (id >= 0) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

/// y = a + b where b's shape is a trailing suffix of a's (bias, positional
/// embeddings, residuals). Gradient of b sums over the broadcast dims.
template <typename T>
VarT<T> add(CtxT<T>& ctx, const VarT<T>& a, const VarT<T>& b) {
  const Shape& sa = a.v.shape();
  const Shape& sb = b.v.shape();
  if (sb.size() > sa.size() ||
      !std::equal(sb.rbegin(), sb.rend(), sa.rbegin()))
    throw ShapeError("add: " + shape_str(sb) + " is not a suffix of " + shape_str(sa));
  const int64_t nb = b.v.numel();
  const int64_t reps = a.v.numel() / nb;

  TensorT<T> y(sa);
  {
    const T* pa = a.v.data();
    const T* pb = b.v.data();
    T* py = y.mutable_data();
    const bool par = parallel_worth(a.v.numel());
#pragma omp parallel for schedule(static) if (par)
    for (int64_t r = 0; r < reps; ++r)
      for (int64_t i = 0; i < nb; ++i) py[r * nb + i] = pa[r * nb + i] + pb[i];
  }

  VarT<T> out{y, -1};
  if (tracked(ctx, {a.id, b.id})) {
    const int ia = a.id, ib = b.id;
    const Shape shb = sb;
    out.id = ctx.tape->record(y, [ia, ib, shb, reps, nb](TapeT<T>& t, const TensorT<T>& g) {
      t.accumulate(ia, g);
      if (ib >= 0) {
        TensorT<T> gb(shb);
        T* pg = gb.mutable_data();
        const T* pgo = g.data();
        for (int64_t r = 0; r < reps; ++r)
          for (int64_t i = 0; i < nb; ++i) pg[i] += pgo[r * nb + i];
        t.accumulate(ib, gb);
      }
    });
  }
  return out;
}

template <typename T>
VarT<T> mul(CtxT<T>& ctx, const VarT<T>& a, const VarT<T>& b) {
  check_same_shape(a.v, b.v, "mul");
  TensorT<T> y(a.v.shape());
  const int64_t n = y.numel();
  {
    const T* pa = a.v.data();
    const T* pb = b.v.data();
    T* py = y.mutable_data();
    for (int64_t i = 0; i < n; ++i) py[i] = pa[i] * pb[i];
  }
  VarT<T> out{y, -1};
  if (tracked(ctx, {a.id, b.id})) {
    const int ia = a.id, ib = b.id;
    TensorT<T> av = a.v, bv = b.v;
    out.id = ctx.tape->record(y, [ia, ib, av, bv, n](TapeT<T>& t, const TensorT<T>& g) {
      const T* pg = g.data();
      if (ia >= 0) {
        TensorT<T> ga(av.shape());
        T* p = ga.mutable_data();
        const T* pb = bv.data();
        for (int64_t i = 0; i < n; ++i) p[i] = pg[i] * pb[i];
        t.accumulate(ia, ga);
      }
      if (ib >= 0) {
        TensorT<T> gb(bv.shape());
        T* p = gb.mutable_data();
        const T* pa = av.data();
        for (int64_t i = 0; i < n; ++i) p[i] = pg[i] * pa[i];
        t.accumulate(ib, gb);
      }
    });
  }
  return out;
}

template <typename T>
VarT<T> scale(CtxT<T>& ctx, const VarT<T>& a, T c) {
  TensorT<T> y(a.v.shape());
  const int64_t n = y.numel();
  {
    const T* pa = a.v.data();
    T* py = y.mutable_data();
    for (int64_t i = 0; i < n; ++i) py[i] = pa[i] * c;
  }
  VarT<T> out{y, -1};
  if (tracked(ctx, {a.id})) {
    const int ia = a.id;
    const Shape sh = a.v.shape();
    out.id = ctx.tape->record(y, [ia, c, sh, n](TapeT<T>& t, const TensorT<T>& g) {
      TensorT<T> ga(sh);
      T* p = ga.mutable_data();
      const T* pg = g.data();
      for (int64_t i = 0; i < n; ++i) p[i] = pg[i] * c;
      t.accumulate(ia, ga);
    });
  }
  return out;
}

enum class Act { kSwish, kGelu, kSigmoid };

inline Act act_from_string(const std::string& s) {
  if (s == "swish") return Act::kSwish;
  if (s == "gelu") return Act::kGelu;
  if (s == "sigmoid") return Act::kSigmoid;
  throw ConfigError("unknown activation kind: " + s);
}

template <typename T>
VarT<T> activation(CtxT<T>& ctx, const VarT<T>& x, Act kind) {
  TensorT<T> y(x.v.shape());
  const int64_t n = y.numel();
  {
    const T* px = x.v.data();
    T* py = y.mutable_data();
    const bool par = parallel_worth(n * 4);
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < n; ++i) {
      switch (kind) {
        case Act::kSwish: py[i] = kernels::swish_val(px[i]); break;
        case Act::kGelu: py[i] = kernels::gelu_val(px[i]); break;
        case Act::kSigmoid: py[i] = kernels::sigmoid_val(px[i]); break;
      }
    }
  }
  VarT<T> out{y, -1};
  if (tracked(ctx, {x.id})) {
    const int ix = x.id;
    TensorT<T> xv = x.v;
    out.id = ctx.tape->record(y, [ix, xv, kind, n](TapeT<T>& t, const TensorT<T>& g) {
      TensorT<T> gx(xv.shape());
      T* p = gx.mutable_data();
      const T* pg = g.data();
      const T* px = xv.data();
      for (int64_t i = 0; i < n; ++i) {
        T d = 0;
        switch (kind) {
          case Act::kSwish: d = kernels::swish_grad(px[i]); break;
          case Act::kGelu: d = kernels::gelu_grad(px[i]); break;
          case Act::kSigmoid: d = kernels::sigmoid_grad(px[i]); break;
        }
        p[i] = pg[i] * d;
      }
      t.accumulate(ix, gx);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// y[..., N] = x[..., K] * w[K, N]; leading dims of x are flattened.
template <typename T>
VarT<T> matmul(CtxT<T>& ctx, const VarT<T>& x, const VarT<T>& w) {
  if (w.v.rank() != 2) throw ShapeError("matmul: weight must be rank 2");
  const int K = w.v.dim(0), N = w.v.dim(1);
  if (x.v.rank() < 1 || x.v.shape().back() != K)
    throw ShapeError("matmul: inner dims disagree, x " + shape_str(x.v.shape()) +
                     " vs w " + shape_str(w.v.shape()));
  const int64_t M = x.v.numel() / K;
  Shape ys = x.v.shape();
  ys.back() = N;
  TensorT<T> y(ys);
  kernels::matmul(x.v.data(), w.v.data(), y.mutable_data(), M, K, N, false, false);

  VarT<T> out{y, -1};
  if (tracked(ctx, {x.id, w.id})) {
    const int ix = x.id, iw = w.id;
    TensorT<T> xv = x.v, wv = w.v;
    out.id = ctx.tape->record(y, [ix, iw, xv, wv, M, K, N](TapeT<T>& t, const TensorT<T>& g) {
      if (ix >= 0) {
        TensorT<T> gx(xv.shape());
        kernels::matmul(g.data(), wv.data(), gx.mutable_data(), M, N, K, false, true);
        t.accumulate(ix, gx);
      }
      if (iw >= 0) {
        TensorT<T> gw(wv.shape());
        kernels::matmul(xv.data(), g.data(), gw.mutable_data(), K, M, N, true, false);
        t.accumulate(iw, gw);
      }
    });
  }
  return out;
}

/// Batched matmul: a [G,M,K] x b [G,K,N] (or [G,N,K] with transB).
template <typename T>
VarT<T> bmm(CtxT<T>& ctx, const VarT<T>& a, const VarT<T>& b, bool transB = false) {
  if (a.v.rank() != 3 || b.v.rank() != 3 || a.v.dim(0) != b.v.dim(0))
    throw ShapeError("bmm: expects [G,M,K]x[G,*,*] with equal G");
  const int G = a.v.dim(0), M = a.v.dim(1), K = a.v.dim(2);
  const int N = transB ? b.v.dim(1) : b.v.dim(2);
  const int bk = transB ? b.v.dim(2) : b.v.dim(1);
  if (bk != K) throw ShapeError("bmm: inner dims disagree");
  TensorT<T> y(Shape{G, M, N});
  kernels::bmm(a.v.data(), b.v.data(), y.mutable_data(), G, M, K, N, false, transB);

  VarT<T> out{y, -1};
  if (tracked(ctx, {a.id, b.id})) {
    const int ia = a.id, ib = b.id;
    TensorT<T> av = a.v, bv = b.v;
    out.id = ctx.tape->record(y, [ia, ib, av, bv, G, M, K, N, transB](TapeT<T>& t, const TensorT<T>& g) {
      if (ia >= 0) {
        TensorT<T> ga(av.shape());
        // transB: y = a b^T -> da = g b ; else da = g b^T
        kernels::bmm(g.data(), bv.data(), ga.mutable_data(), G, M, N, K, false, !transB);
        t.accumulate(ia, ga);
      }
      if (ib >= 0) {
        TensorT<T> gb(bv.shape());
        if (transB)  // db[G,N,K] = g^T a
          kernels::bmm(g.data(), av.data(), gb.mutable_data(), G, N, M, K, true, false);
        else  // db[G,K,N] = a^T g
          kernels::bmm(av.data(), g.data(), gb.mutable_data(), G, K, M, N, true, false);
        t.accumulate(ib, gb);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

enum class Pad { kValid, kSame };

/// 1D convolution, channels last. x: [B,T,Cin] (or [T,Cin]),
/// w: [K, Cin/groups, Cout], b: [Cout] (optional, undefined Var allowed).
template <typename T>
VarT<T> conv1d(CtxT<T>& ctx, const VarT<T>& x, const VarT<T>& w, const VarT<T>& b,
               int stride, int groups, Pad pad) {
  const bool batched = x.v.rank() == 3;
  if (!batched && x.v.rank() != 2) throw ShapeError("conv1d: input must be [B,T,C] or [T,C]");
  if (w.v.rank() != 3) throw ShapeError("conv1d: kernel must be [K, Cin/groups, Cout]");
  if (stride < 1) throw ConfigError("conv1d: stride must be >= 1");
  const int B = batched ? x.v.dim(0) : 1;
  const int Tin = batched ? x.v.dim(1) : x.v.dim(0);
  const int Cin = batched ? x.v.dim(2) : x.v.dim(1);
  const int K = w.v.dim(0), Cout = w.v.dim(2);
  if (Cin % groups || Cout % groups)
    throw ShapeError("conv1d: channel counts not divisible by groups");
  if (w.v.dim(1) != Cin / groups)
    throw ShapeError("conv1d: kernel expects Cin/groups = " + std::to_string(w.v.dim(1)) +
                     ", input has Cin = " + std::to_string(Cin));
  if (b.v.defined() && (b.v.rank() != 1 || b.v.dim(0) != Cout))
    throw ShapeError("conv1d: bias must be [Cout]");

  int padL = 0, To;
  if (pad == Pad::kValid) {
    if (Tin < K) throw ShapeError("conv1d: input length " + std::to_string(Tin) +
                                  " shorter than kernel " + std::to_string(K));
    To = (Tin - K) / stride + 1;
  } else {
    To = (Tin + stride - 1) / stride;
    const int total = std::max((To - 1) * stride + K - Tin, 0);
    padL = total / 2;
  }

  Shape ys = batched ? Shape{B, To, Cout} : Shape{To, Cout};
  TensorT<T> y(ys);
  kernels::conv1d_forward(x.v.data(), w.v.data(), b.v.defined() ? b.v.data() : nullptr,
                          y.mutable_data(), B, Tin, Cin, K, Cout, stride, padL, To, groups);

  VarT<T> out{y, -1};
  if (tracked(ctx, {x.id, w.id, b.id})) {
    const int ix = x.id, iw = w.id, ib = b.id;
    TensorT<T> xv = x.v, wv = w.v;
    const bool has_b = b.v.defined();
    out.id = ctx.tape->record(
        y, [=](TapeT<T>& t, const TensorT<T>& g) {
          if (ix >= 0) {
            TensorT<T> gx(xv.shape());
            kernels::conv1d_backward_input(g.data(), wv.data(), gx.mutable_data(), B, Tin,
                                           Cin, K, Cout, stride, padL, To, groups);
            t.accumulate(ix, gx);
          }
          if (iw >= 0 || ib >= 0) {
            TensorT<T> gw(wv.shape());
            TensorT<T> gb = has_b ? TensorT<T>(Shape{Cout}) : TensorT<T>();
            kernels::conv1d_backward_weight(xv.data(), g.data(), gw.mutable_data(),
                                            has_b ? gb.mutable_data() : nullptr, B, Tin,
                                            Cin, K, Cout, stride, padL, To, groups);
            if (iw >= 0) t.accumulate(iw, gw);
            if (ib >= 0) t.accumulate(ib, gb);
          }
        });
  }
  return out;
}

/// Depthwise conv along axis 1 of x [B,N,C] with a kernel shared across C/G
/// channel groups: w [G,K], same padding, K odd.
template <typename T>
VarT<T> shared_dconv(CtxT<T>& ctx, const VarT<T>& x, const VarT<T>& w) {
  if (x.v.rank() != 3 || w.v.rank() != 2) throw ShapeError("shared_dconv: x [B,N,C], w [G,K]");
  const int B = x.v.dim(0), N = x.v.dim(1), C = x.v.dim(2);
  const int G = w.v.dim(0), K = w.v.dim(1);
  if (K % 2 == 0) throw ConfigError("shared_dconv: kernel size must be odd");
  if (C % G) throw ShapeError("shared_dconv: channels not divisible by groups");
  TensorT<T> y(x.v.shape());
  kernels::shared_dconv_forward(x.v.data(), w.v.data(), y.mutable_data(), B, N, C, G, K);

  VarT<T> out{y, -1};
  if (tracked(ctx, {x.id, w.id})) {
    const int ix = x.id, iw = w.id;
    TensorT<T> xv = x.v, wv = w.v;
    out.id = ctx.tape->record(y, [=](TapeT<T>& t, const TensorT<T>& g) {
      TensorT<T> gx(xv.shape()), gw(wv.shape());
      kernels::shared_dconv_backward(xv.data(), wv.data(), g.data(), gx.mutable_data(),
                                     gw.mutable_data(), B, N, C, G, K);
      if (ix >= 0) t.accumulate(ix, gx);
      if (iw >= 0) t.accumulate(iw, gw);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

template <typename T>
VarT<T> layer_norm(CtxT<T>& ctx, const VarT<T>& x, const VarT<T>& gamma,
                   const VarT<T>& beta, T eps) {
  if (eps <= 0) throw ConfigError("layer_norm: eps must be > 0");
  const int d = x.v.shape().back();
  if (gamma.v.numel() != d || beta.v.numel() != d)
    throw ShapeError("layer_norm: affine params must have length d");
  const int64_t rows = x.v.numel() / d;
  TensorT<T> y(x.v.shape()), mean(Shape{static_cast<int>(rows)}),
      invstd(Shape{static_cast<int>(rows)});
  kernels::layernorm_forward(x.v.data(), gamma.v.data(), beta.v.data(), y.mutable_data(),
                             mean.mutable_data(), invstd.mutable_data(), rows, d, eps);

  VarT<T> out{y, -1};
  if (tracked(ctx, {x.id, gamma.id, beta.id})) {
    const int ix = x.id, ig = gamma.id, ib = beta.id;
    TensorT<T> xv = x.v, gv = gamma.v;
    out.id = ctx.tape->record(y, [=](TapeT<T>& t, const TensorT<T>& g) {
      TensorT<T> gx(xv.shape()), dgamma(Shape{d}), dbeta(Shape{d});
      kernels::layernorm_backward(xv.data(), gv.data(), mean.data(), invstd.data(),
                                  g.data(), gx.mutable_data(), dgamma.mutable_data(),
                                  dbeta.mutable_data(), rows, d);
      if (ix >= 0) t.accumulate(ix, gx);
      if (ig >= 0) t.accumulate(ig, dgamma);
      if (ib >= 0) t.accumulate(ib, dbeta);
    });
  }
  return out;
}

/// Batch norm over the last axis (channels); all leading dims are batch.
/// Train mode normalizes with batch statistics and updates running stats
/// in place (module state, not tape values); eval uses running stats.
template <typename T>
VarT<T> batch_norm(CtxT<T>& ctx, const VarT<T>& x, const VarT<T>& gamma,
                   const VarT<T>& beta, TensorT<T>& running_mean,
                   TensorT<T>& running_var, int64_t& batches_seen, T momentum,
                   T eps) {
  if (eps <= 0) throw ConfigError("batch_norm: eps must be > 0");
  const int C = x.v.shape().back();
  const int64_t rows = x.v.numel() / C;
  TensorT<T> y(x.v.shape());
  const T* px = x.v.data();
  const T* pg = gamma.v.data();
  const T* pb = beta.v.data();
  T* py = y.mutable_data();

  if (ctx.training()) {
    TensorT<T> mean(Shape{C}), var(Shape{C});
    T* pm = mean.mutable_data();
    T* pv = var.mutable_data();
#pragma omp parallel for schedule(static) if (parallel_worth(rows* C))
    for (int c = 0; c < C; ++c) {
      T s = 0;
      for (int64_t r = 0; r < rows; ++r) s += px[r * C + c];
      const T mu = s / static_cast<T>(rows);
      T v = 0;
      for (int64_t r = 0; r < rows; ++r) {
        const T dvv = px[r * C + c] - mu;
        v += dvv * dvv;
      }
      pm[c] = mu;
      pv[c] = v / static_cast<T>(rows);
    }
    TensorT<T> invstd(Shape{C});
    T* pis = invstd.mutable_data();
    for (int c = 0; c < C; ++c) pis[c] = T(1) / std::sqrt(pv[c] + eps);
#pragma omp parallel for schedule(static) if (parallel_worth(rows* C))
    for (int64_t r = 0; r < rows; ++r)
      for (int c = 0; c < C; ++c)
        py[r * C + c] = (px[r * C + c] - pm[c]) * pis[c] * pg[c] + pb[c];

    // Running-stat update: r <- momentum*r + (1-momentum)*batch.
    T* prm = running_mean.mutable_data();
    T* prv = running_var.mutable_data();
    for (int c = 0; c < C; ++c) {
      prm[c] = momentum * prm[c] + (T(1) - momentum) * pm[c];
      prv[c] = momentum * prv[c] + (T(1) - momentum) * pv[c];
    }
    ++batches_seen;

    VarT<T> out{y, -1};
    if (tracked(ctx, {x.id, gamma.id, beta.id})) {
      const int ix = x.id, ig = gamma.id, ib = beta.id;
      TensorT<T> xv = x.v, gv = gamma.v;
      out.id = ctx.tape->record(y, [=](TapeT<T>& t, const TensorT<T>& g) {
        const T* pgo = g.data();
        const T* pxv = xv.data();
        const T* pgv = gv.data();
        TensorT<T> dgamma(Shape{C}), dbeta(Shape{C});
        T* pdg = dgamma.mutable_data();
        T* pdb = dbeta.mutable_data();
        TensorT<T> gx(xv.shape());
        T* pgx = gx.mutable_data();
#pragma omp parallel for schedule(static) if (parallel_worth(rows* C))
        for (int c = 0; c < C; ++c) {
          T sg = 0, sb = 0;
          for (int64_t r = 0; r < rows; ++r) {
            const T xh = (pxv[r * C + c] - mean.data()[c]) * invstd.data()[c];
            sg += pgo[r * C + c] * xh;
            sb += pgo[r * C + c];
          }
          pdg[c] = sg;
          pdb[c] = sb;
          const T k = pgv[c] * invstd.data()[c] / static_cast<T>(rows);
          for (int64_t r = 0; r < rows; ++r) {
            const T xh = (pxv[r * C + c] - mean.data()[c]) * invstd.data()[c];
            pgx[r * C + c] = k * (static_cast<T>(rows) * pgo[r * C + c] - sb - xh * sg);
          }
        }
        if (ix >= 0) t.accumulate(ix, gx);
        if (ig >= 0) t.accumulate(ig, dgamma);
        if (ib >= 0) t.accumulate(ib, dbeta);
      });
    }
    return out;
  }

  // Eval: per-channel affine map from frozen statistics.
  if (batches_seen == 0)
    throw Error("batch_norm: eval mode before any statistics were recorded");
  const T* prm = running_mean.data();
  const T* prv = running_var.data();
  TensorT<T> scale_t(Shape{C});
  T* psc = scale_t.mutable_data();
  for (int c = 0; c < C; ++c) psc[c] = pg[c] / std::sqrt(prv[c] + eps);
#pragma omp parallel for schedule(static) if (parallel_worth(rows* C))
  for (int64_t r = 0; r < rows; ++r)
    for (int c = 0; c < C; ++c)
      py[r * C + c] = (px[r * C + c] - prm[c]) * psc[c] + pb[c];

  VarT<T> out{y, -1};
  if (tracked(ctx, {x.id, gamma.id, beta.id})) {
    const int ix = x.id, ig = gamma.id, ib = beta.id;
    TensorT<T> xv = x.v;
    TensorT<T> rm = running_mean, rv = running_var;  // frozen copies
    out.id = ctx.tape->record(y, [=](TapeT<T>& t, const TensorT<T>& g) {
      const T* pgo = g.data();
      if (ix >= 0) {
        TensorT<T> gx(xv.shape());
        T* pgx = gx.mutable_data();
        for (int64_t r = 0; r < rows; ++r)
          for (int c = 0; c < C; ++c) pgx[r * C + c] = pgo[r * C + c] * scale_t.data()[c];
        t.accumulate(ix, gx);
      }
      if (ig >= 0 || ib >= 0) {
        TensorT<T> dgamma(Shape{C}), dbeta(Shape{C});
        T* pdg = dgamma.mutable_data();
        T* pdb = dbeta.mutable_data();
        for (int c = 0; c < C; ++c) {
          T sg = 0, sb = 0;
          const T is = T(1) / std::sqrt(rv.data()[c] + eps);
          for (int64_t r = 0; r < rows; ++r) {
            sg += pgo[r * C + c] * (xv.data()[r * C + c] - rm.data()[c]) * is;
            sb += pgo[r * C + c];
          }
          pdg[c] = sg;
          pdb[c] = sb;
        }
        if (ig >= 0) t.accumulate(ig, dgamma);
        if (ib >= 0) t.accumulate(ib, dbeta);
      }
    });
  }
  return out;
}

template <typename T>
VarT<T> softmax(CtxT<T>& ctx, const VarT<T>& x, int axis = -1) {
  const int r = x.v.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("softmax: axis out of range");
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.v.dim(i);
  for (int i = axis + 1; i < r; ++i) inner *= x.v.dim(i);
  const int64_t n = x.v.dim(axis);
  TensorT<T> y(x.v.shape());
  kernels::softmax(x.v.data(), y.mutable_data(), outer, n, inner);

  VarT<T> out{y, -1};
  if (tracked(ctx, {x.id})) {
    const int ix = x.id;
    TensorT<T> yv = y;
    out.id = ctx.tape->record(y, [ix, yv, outer, n, inner](TapeT<T>& t, const TensorT<T>& g) {
      TensorT<T> gx(yv.shape());
      kernels::softmax_backward(yv.data(), g.data(), gx.mutable_data(), outer, n, inner);
      t.accumulate(ix, gx);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stochastic regularizers
// ---------------------------------------------------------------------------

/// Inverted-scaling dropout; eval mode is a bit-exact identity.
template <typename T>
VarT<T> dropout(CtxT<T>& ctx, const VarT<T>& x, double rate) {
  if (rate < 0 || rate >= 1) throw ConfigError("dropout: rate must be in [0,1)");
  if (!ctx.training() || rate == 0) return x;
  RngStream rng = ctx.stream("dropout");
  TensorT<T> mask(x.v.shape());
  const T keep_scale = T(1.0 / (1.0 - rate));
  T* pm = mask.mutable_data();
  const int64_t n = mask.numel();
  for (int64_t i = 0; i < n; ++i) pm[i] = rng.uniform() < rate ? T(0) : keep_scale;
  return mul(ctx, x, VarT<T>{mask, -1});
}

/// Stochastic depth: zero the whole branch per leading-axis sample with
/// probability rate, else scale by 1/(1-rate). Eval is a bit-exact identity.
template <typename T>
VarT<T> drop_path(CtxT<T>& ctx, const VarT<T>& x, double rate) {
  if (rate < 0 || rate >= 1) throw ConfigError("drop_path: rate must be in [0,1)");
  if (!ctx.training() || rate == 0) return x;
  RngStream rng = ctx.stream("drop_path");
  const int B = x.v.dim(0);
  const int64_t per = x.v.numel() / B;
  TensorT<T> mask(x.v.shape());
  const T keep_scale = T(1.0 / (1.0 - rate));
  T* pm = mask.mutable_data();
  for (int b = 0; b < B; ++b) {
    const T v = rng.uniform() < rate ? T(0) : keep_scale;
    std::fill(pm + b * per, pm + (b + 1) * per, v);
  }
  return mul(ctx, x, VarT<T>{mask, -1});
}

// ---------------------------------------------------------------------------
// Shape movement
// ---------------------------------------------------------------------------

template <typename T>
VarT<T> reshape(CtxT<T>& ctx, const VarT<T>& x, Shape shape) {
  TensorT<T> y = x.v.reshaped(std::move(shape));
  VarT<T> out{y, -1};
  if (tracked(ctx, {x.id})) {
    const int ix = x.id;
    const Shape orig = x.v.shape();
    out.id = ctx.tape->record(y, [ix, orig](TapeT<T>& t, const TensorT<T>& g) {
      t.accumulate(ix, g.reshaped(orig));
    });
  }
  return out;
}

/// Columns [c0, c1) of the last axis.
template <typename T>
VarT<T> slice_last(CtxT<T>& ctx, const VarT<T>& x, int c0, int c1) {
  const int C = x.v.shape().back();
  if (c0 < 0 || c1 > C || c0 >= c1) throw ShapeError("slice_last: bad range");
  Shape ys = x.v.shape();
  ys.back() = c1 - c0;
  const int64_t rows = x.v.numel() / C;
  const int w = c1 - c0;
  TensorT<T> y(ys);
  {
    const T* px = x.v.data();
    T* py = y.mutable_data();
    for (int64_t r = 0; r < rows; ++r)
      std::copy(px + r * C + c0, px + r * C + c1, py + r * w);
  }
  VarT<T> out{y, -1};
  if (tracked(ctx, {x.id})) {
    const int ix = x.id;
    const Shape orig = x.v.shape();
    out.id = ctx.tape->record(y, [ix, orig, rows, C, c0, w](TapeT<T>& t, const TensorT<T>& g) {
      TensorT<T> gx(orig);
      T* pgx = gx.mutable_data();
      const T* pg = g.data();
      for (int64_t r = 0; r < rows; ++r)
        std::copy(pg + r * w, pg + (r + 1) * w, pgx + r * C + c0);
      t.accumulate(ix, gx);
    });
  }
  return out;
}

/// Concatenate along the last axis.
template <typename T>
VarT<T> concat_last(CtxT<T>& ctx, const std::vector<VarT<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_last: no parts");
  Shape lead = parts[0].v.shape();
  lead.pop_back();
  int C = 0;
  std::vector<int> widths;
  for (const auto& p : parts) {
    Shape l = p.v.shape();
    const int w = l.back();
    l.pop_back();
    if (l != lead) throw ShapeError("concat_last: leading dims disagree");
    widths.push_back(w);
    C += w;
  }
  Shape ys = lead;
  ys.push_back(C);
  const int64_t rows = shape_numel(lead);
  TensorT<T> y(ys);
  {
    T* py = y.mutable_data();
    int off = 0;
    for (size_t i = 0; i < parts.size(); ++i) {
      const T* px = parts[i].v.data();
      const int w = widths[i];
      for (int64_t r = 0; r < rows; ++r)
        std::copy(px + r * w, px + (r + 1) * w, py + r * C + off);
      off += w;
    }
  }
  VarT<T> out{y, -1};
  std::vector<int> ids;
  for (const auto& p : parts) ids.push_back(p.id);
  bool any = false;
  for (int id : ids) any = any || id >= 0;
  if (ctx.tape && any) {
    std::vector<Shape> shapes;
    for (const auto& p : parts) shapes.push_back(p.v.shape());
    out.id = ctx.tape->record(y, [ids, shapes, widths, rows, C](TapeT<T>& t, const TensorT<T>& g) {
      const T* pg = g.data();
      int off = 0;
      for (size_t i = 0; i < ids.size(); ++i) {
        const int w = widths[i];
        if (ids[i] >= 0) {
          TensorT<T> gi(shapes[i]);
          T* p = gi.mutable_data();
          for (int64_t r = 0; r < rows; ++r)
            std::copy(pg + r * C + off, pg + r * C + off + w, p + r * w);
          t.accumulate(ids[i], gi);
        }
        off += w;
      }
    });
  }
  return out;
}

/// Rows [r0, r1) of axis 1 of x [B,N,D].
template <typename T>
VarT<T> slice_rows(CtxT<T>& ctx, const VarT<T>& x, int r0, int r1) {
  if (x.v.rank() != 3) throw ShapeError("slice_rows: expects [B,N,D]");
  const int B = x.v.dim(0), N = x.v.dim(1), D = x.v.dim(2);
  if (r0 < 0 || r1 > N || r0 >= r1) throw ShapeError("slice_rows: bad range");
  const int n = r1 - r0;
  TensorT<T> y(Shape{B, n, D});
  {
    const T* px = x.v.data();
    T* py = y.mutable_data();
    for (int b = 0; b < B; ++b)
      std::copy(px + (static_cast<int64_t>(b) * N + r0) * D,
                px + (static_cast<int64_t>(b) * N + r1) * D,
                py + static_cast<int64_t>(b) * n * D);
  }
  VarT<T> out{y, -1};
  if (tracked(ctx, {x.id})) {
    const int ix = x.id;
    out.id = ctx.tape->record(y, [ix, B, N, D, r0, n](TapeT<T>& t, const TensorT<T>& g) {
      TensorT<T> gx(Shape{B, N, D});
      T* pgx = gx.mutable_data();
      const T* pg = g.data();
      for (int b = 0; b < B; ++b)
        std::copy(pg + static_cast<int64_t>(b) * n * D, pg + static_cast<int64_t>(b + 1) * n * D,
                  pgx + (static_cast<int64_t>(b) * N + r0) * D);
      t.accumulate(ix, gx);
    });
  }
  return out;
}

/// Concatenate along axis 1: [B,Na,D] + [B,Nb,D] -> [B,Na+Nb,D].
template <typename T>
VarT<T> concat_rows(CtxT<T>& ctx, const VarT<T>& a, const VarT<T>& b) {
  if (a.v.rank() != 3 || b.v.rank() != 3 || a.v.dim(0) != b.v.dim(0) ||
      a.v.dim(2) != b.v.dim(2))
    throw ShapeError("concat_rows: incompatible shapes");
  const int B = a.v.dim(0), Na = a.v.dim(1), Nb = b.v.dim(1), D = a.v.dim(2);
  TensorT<T> y(Shape{B, Na + Nb, D});
  {
    const T* pa = a.v.data();
    const T* pb = b.v.data();
    T* py = y.mutable_data();
    for (int bb = 0; bb < B; ++bb) {
      std::copy(pa + static_cast<int64_t>(bb) * Na * D, pa + static_cast<int64_t>(bb + 1) * Na * D,
                py + static_cast<int64_t>(bb) * (Na + Nb) * D);
      std::copy(pb + static_cast<int64_t>(bb) * Nb * D, pb + static_cast<int64_t>(bb + 1) * Nb * D,
                py + (static_cast<int64_t>(bb) * (Na + Nb) + Na) * D);
    }
  }
  VarT<T> out{y, -1};
  if (tracked(ctx, {a.id, b.id})) {
    const int ia = a.id, ib = b.id;
    out.id = ctx.tape->record(y, [ia, ib, B, Na, Nb, D](TapeT<T>& t, const TensorT<T>& g) {
      const T* pg = g.data();
      if (ia >= 0) {
        TensorT<T> ga(Shape{B, Na, D});
        T* p = ga.mutable_data();
        for (int bb = 0; bb < B; ++bb)
          std::copy(pg + static_cast<int64_t>(bb) * (Na + Nb) * D,
                    pg + (static_cast<int64_t>(bb) * (Na + Nb) + Na) * D,
                    p + static_cast<int64_t>(bb) * Na * D);
        t.accumulate(ia, ga);
      }
      if (ib >= 0) {
        TensorT<T> gb(Shape{B, Nb, D});
        T* p = gb.mutable_data();
        for (int bb = 0; bb < B; ++bb)
          std::copy(pg + (static_cast<int64_t>(bb) * (Na + Nb) + Na) * D,
                    pg + static_cast<int64_t>(bb + 1) * (Na + Nb) * D,
                    p + static_cast<int64_t>(bb) * Nb * D);
        t.accumulate(ib, gb);
      }
    });
  }
  return out;
}

/// Broadcast a [D] vector into [B,1,D] (class-token expansion).
template <typename T>
VarT<T> tile_rows(CtxT<T>& ctx, const VarT<T>& p, int B) {
  if (p.v.rank() != 1) throw ShapeError("tile_rows: expects [D]");
  const int D = p.v.dim(0);
  TensorT<T> y(Shape{B, 1, D});
  {
    T* py = y.mutable_data();
    for (int b = 0; b < B; ++b) std::copy(p.v.data(), p.v.data() + D, py + static_cast<int64_t>(b) * D);
  }
  VarT<T> out{y, -1};
  if (tracked(ctx, {p.id})) {
    const int ip = p.id;
    out.id = ctx.tape->record(y, [ip, B, D](TapeT<T>& t, const TensorT<T>& g) {
      TensorT<T> gp(Shape{D});
      T* pg = gp.mutable_data();
      const T* pgo = g.data();
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < D; ++c) pg[c] += pgo[static_cast<int64_t>(b) * D + c];
      t.accumulate(ip, gp);
    });
  }
  return out;
}

namespace detail {
// [B,N,H*hd] <-> [B*H,N,hd] permutation copies.
template <typename T>
void heads_fwd(const T* x, T* y, int B, int N, int H, int hd) {
  const int64_t HD = static_cast<int64_t>(H) * hd;
#pragma omp parallel for collapse(2) schedule(static) if (parallel_worth(int64_t(B) * N * HD))
  for (int b = 0; b < B; ++b)
    for (int h = 0; h < H; ++h)
      for (int n = 0; n < N; ++n)
        for (int j = 0; j < hd; ++j)
          y[((static_cast<int64_t>(b) * H + h) * N + n) * hd + j] =
              x[(static_cast<int64_t>(b) * N + n) * HD + h * hd + j];
}
template <typename T>
void heads_bwd(const T* y, T* x, int B, int N, int H, int hd) {
  const int64_t HD = static_cast<int64_t>(H) * hd;
#pragma omp parallel for collapse(2) schedule(static) if (parallel_worth(int64_t(B) * N * HD))
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n)
      for (int h = 0; h < H; ++h)
        for (int j = 0; j < hd; ++j)
          x[(static_cast<int64_t>(b) * N + n) * HD + h * hd + j] =
              y[((static_cast<int64_t>(b) * H + h) * N + n) * hd + j];
}
}  // namespace detail

template <typename T>
VarT<T> split_heads(CtxT<T>& ctx, const VarT<T>& x, int H) {
  if (x.v.rank() != 3) throw ShapeError("split_heads: expects [B,N,H*hd]");
  const int B = x.v.dim(0), N = x.v.dim(1), HD = x.v.dim(2);
  if (HD % H) throw ShapeError("split_heads: width not divisible by head count");
  const int hd = HD / H;
  TensorT<T> y(Shape{B * H, N, hd});
  detail::heads_fwd(x.v.data(), y.mutable_data(), B, N, H, hd);
  VarT<T> out{y, -1};
  if (tracked(ctx, {x.id})) {
    const int ix = x.id;
    out.id = ctx.tape->record(y, [ix, B, N, H, hd, HD](TapeT<T>& t, const TensorT<T>& g) {
      TensorT<T> gx(Shape{B, N, HD});
      detail::heads_bwd(g.data(), gx.mutable_data(), B, N, H, hd);
      t.accumulate(ix, gx);
    });
  }
  return out;
}

template <typename T>
VarT<T> merge_heads(CtxT<T>& ctx, const VarT<T>& x, int H) {
  if (x.v.rank() != 3) throw ShapeError("merge_heads: expects [B*H,N,hd]");
  const int BH = x.v.dim(0), N = x.v.dim(1), hd = x.v.dim(2);
  if (BH % H) throw ShapeError("merge_heads: batch not divisible by head count");
  const int B = BH / H;
  TensorT<T> y(Shape{B, N, H * hd});
  detail::heads_bwd(x.v.data(), y.mutable_data(), B, N, H, hd);
  VarT<T> out{y, -1};
  if (tracked(ctx, {x.id})) {
    const int ix = x.id;
    out.id = ctx.tape->record(y, [ix, B, N, H, hd](TapeT<T>& t, const TensorT<T>& g) {
      TensorT<T> gx(Shape{B * H, N, hd});
      detail::heads_fwd(g.data(), gx.mutable_data(), B, N, H, hd);
      t.accumulate(ix, gx);
    });
  }
  return out;
}

namespace detail {
// [B,T,C] <-> [B*p, T/p, C]: row f*p+i of sample b becomes row f of
// subsequence (b,i). Frame-major order.
template <typename T>
void unfold_fwd(const T* x, T* y, int B, int Tlen, int C, int p) {
  const int F = Tlen / p;
#pragma omp parallel for collapse(2) schedule(static) if (parallel_worth(int64_t(B) * Tlen * C))
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < p; ++i)
      for (int f = 0; f < F; ++f)
        std::copy(x + (static_cast<int64_t>(b) * Tlen + f * p + i) * C,
                  x + (static_cast<int64_t>(b) * Tlen + f * p + i) * C + C,
                  y + ((static_cast<int64_t>(b) * p + i) * F + f) * C);
}
template <typename T>
void unfold_bwd(const T* y, T* x, int B, int Tlen, int C, int p) {
  const int F = Tlen / p;
#pragma omp parallel for collapse(2) schedule(static) if (parallel_worth(int64_t(B) * Tlen * C))
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < p; ++i)
      for (int f = 0; f < F; ++f)
        std::copy(y + ((static_cast<int64_t>(b) * p + i) * F + f) * C,
                  y + ((static_cast<int64_t>(b) * p + i) * F + f) * C + C,
                  x + (static_cast<int64_t>(b) * Tlen + f * p + i) * C);
}
}  // namespace detail

template <typename T>
VarT<T> unfold_frames(CtxT<T>& ctx, const VarT<T>& x, int p) {
  if (x.v.rank() != 3) throw ShapeError("unfold_frames: expects [B,T,C]");
  const int B = x.v.dim(0), Tlen = x.v.dim(1), C = x.v.dim(2);
  if (Tlen % p) throw ShapeError("unfold_frames: length not divisible by frame size");
  TensorT<T> y(Shape{B * p, Tlen / p, C});
  detail::unfold_fwd(x.v.data(), y.mutable_data(), B, Tlen, C, p);
  VarT<T> out{y, -1};
  if (tracked(ctx, {x.id})) {
    const int ix = x.id;
    out.id = ctx.tape->record(y, [ix, B, Tlen, C, p](TapeT<T>& t, const TensorT<T>& g) {
      TensorT<T> gx(Shape{B, Tlen, C});
      detail::unfold_bwd(g.data(), gx.mutable_data(), B, Tlen, C, p);
      t.accumulate(ix, gx);
    });
  }
  return out;
}

template <typename T>
VarT<T> fold_frames(CtxT<T>& ctx, const VarT<T>& x, int p) {
  if (x.v.rank() != 3) throw ShapeError("fold_frames: expects [B*p,F,C]");
  const int Bp = x.v.dim(0), F = x.v.dim(1), C = x.v.dim(2);
  if (Bp % p) throw ShapeError("fold_frames: batch not divisible by frame size");
  const int B = Bp / p;
  TensorT<T> y(Shape{B, F * p, C});
  detail::unfold_bwd(x.v.data(), y.mutable_data(), B, F * p, C, p);
  VarT<T> out{y, -1};
  if (tracked(ctx, {x.id})) {
    const int ix = x.id;
    out.id = ctx.tape->record(y, [ix, B, F, C, p](TapeT<T>& t, const TensorT<T>& g) {
      TensorT<T> gx(Shape{B * p, F, C});
      detail::unfold_fwd(g.data(), gx.mutable_data(), B, F * p, C, p);
      t.accumulate(ix, gx);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

/// Mean over the frame axis: [B,N,D] -> [B,D] (or [N,D] -> [D]).
template <typename T>
VarT<T> global_average_pool(CtxT<T>& ctx, const VarT<T>& x) {
  if (x.v.rank() != 2 && x.v.rank() != 3)
    throw ShapeError("global_average_pool: expects [B,N,D] or [N,D]");
  const bool batched = x.v.rank() == 3;
  const int B = batched ? x.v.dim(0) : 1;
  const int N = batched ? x.v.dim(1) : x.v.dim(0);
  const int D = batched ? x.v.dim(2) : x.v.dim(1);
  TensorT<T> y(batched ? Shape{B, D} : Shape{D});
  {
    const T* px = x.v.data();
    T* py = y.mutable_data();
    const T inv = T(1) / static_cast<T>(N);
    for (int b = 0; b < B; ++b) {
      T* row = py + static_cast<int64_t>(b) * D;
      std::fill(row, row + D, T(0));
      for (int n = 0; n < N; ++n) {
        const T* xr = px + (static_cast<int64_t>(b) * N + n) * D;
        for (int c = 0; c < D; ++c) row[c] += xr[c];
      }
      for (int c = 0; c < D; ++c) row[c] *= inv;
    }
  }
  VarT<T> out{y, -1};
  if (tracked(ctx, {x.id})) {
    const int ix = x.id;
    const Shape orig = x.v.shape();
    out.id = ctx.tape->record(y, [ix, orig, B, N, D](TapeT<T>& t, const TensorT<T>& g) {
      TensorT<T> gx(orig);
      T* pgx = gx.mutable_data();
      const T* pg = g.data();
      const T inv = T(1) / static_cast<T>(N);
      for (int b = 0; b < B; ++b)
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < D; ++c)
            pgx[(static_cast<int64_t>(b) * N + n) * D + c] = pg[static_cast<int64_t>(b) * D + c] * inv;
      t.accumulate(ix, gx);
    });
  }
  return out;
}

/// Sum of all elements -> scalar [1].
template <typename T>
VarT<T> sum_all(CtxT<T>& ctx, const VarT<T>& x) {
  T s = 0;
  const T* px = x.v.data();
  for (int64_t i = 0; i < x.v.numel(); ++i) s += px[i];
  TensorT<T> y = TensorT<T>::scalar(s);
  VarT<T> out{y, -1};
  if (tracked(ctx, {x.id})) {
    const int ix = x.id;
    const Shape orig = x.v.shape();
    out.id = ctx.tape->record(y, [ix, orig](TapeT<T>& t, const TensorT<T>& g) {
      t.accumulate(ix, TensorT<T>::full(orig, g.data()[0]));
    });
  }
  return out;
}

}  // namespace hart::ops
