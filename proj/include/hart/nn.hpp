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

#include "hart/cost.hpp"
#include "hart/ops.hpp"
#include "hart/tape.hpp"

namespace hart {

/// Test hook: when Ctx::trace points here, encoder blocks record their
/// per-branch outputs (float models only).
struct BlockTrace {
  int target_block = 0;
  std::vector<Tensor> msa_out;   // one per sensor branch, pre-concat
  std::vector<Tensor> lite_out;  // lightconv output (single entry)
};

}  // namespace hart

namespace hart::nn {

template <typename T>
TensorT<T> trunc_normal_init(Shape shape, RngStream& rng, double sigma = 0.02) {
  TensorT<T> t(std::move(shape));
  T* p = t.mutable_data();
  for (int64_t i = 0; i < t.numel(); ++i)
    p[i] = static_cast<T>(rng.truncated_normal(sigma));
  return t;
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------
template <typename T>
struct LinearT {
  ParameterT<T>* w = nullptr;
  ParameterT<T>* b = nullptr;
  int in = 0, out = 0;

  void build(ParamStoreT<T>& ps, RngStream& rng, const std::string& name, int in_,
             int out_, bool bias = true) {
    in = in_;
    out = out_;
    w = &ps.add(name + "/w", trunc_normal_init<T>({in, out}, rng));
    if (bias) b = &ps.add(name + "/b", TensorT<T>(Shape{out}));
  }

  VarT<T> forward(CtxT<T>& ctx, const VarT<T>& x) const {
    VarT<T> y = ops::matmul(ctx, x, ctx.use(*w));
    if (b) y = ops::add(ctx, y, ctx.use(*b));
    return y;
  }

  void cost(CostReport& r, const std::string& name, int64_t rows) const {
    auto& e = r.add(name);
    e.params = w->value.numel() + (b ? b->value.numel() : 0);
    e.trainable_params = e.params;
    e.flops = rows * (int64_t(r.convention.mac) * in * out + (b ? out : 0));
  }
};

// ---------------------------------------------------------------------------
// LayerNorm (last axis)
// ---------------------------------------------------------------------------
template <typename T>
struct LayerNormT {
  ParameterT<T>* gamma = nullptr;
  ParameterT<T>* beta = nullptr;
  int d = 0;
  T eps = T(1e-6);

  void build(ParamStoreT<T>& ps, const std::string& name, int d_, T eps_ = T(1e-6)) {
    d = d_;
    eps = eps_;
    gamma = &ps.add(name + "/gamma", TensorT<T>::full(Shape{d}, T(1)));
    beta = &ps.add(name + "/beta", TensorT<T>(Shape{d}));
  }

  VarT<T> forward(CtxT<T>& ctx, const VarT<T>& x) const {
    return ops::layer_norm(ctx, x, ctx.use(*gamma), ctx.use(*beta), eps);
  }

  void cost(CostReport& r, const std::string& name, int64_t rows) const {
    auto& e = r.add(name);
    e.params = e.trainable_params = 2 * d;
    e.flops = rows * d * r.convention.norm;
  }
};

// ---------------------------------------------------------------------------
// BatchNorm over channels (last axis). Running stats and the batch counter
// are non-trainable buffer entries so checkpoints capture them.
// ---------------------------------------------------------------------------
template <typename T>
struct BatchNormT {
  ParameterT<T>* gamma = nullptr;
  ParameterT<T>* beta = nullptr;
  ParameterT<T>* running_mean = nullptr;
  ParameterT<T>* running_var = nullptr;
  ParameterT<T>* batches = nullptr;  // scalar count, float-stored
  int c = 0;
  T momentum = T(0.99), eps = T(1e-3);

  void build(ParamStoreT<T>& ps, const std::string& name, int c_) {
    c = c_;
    gamma = &ps.add(name + "/gamma", TensorT<T>::full(Shape{c}, T(1)));
    beta = &ps.add(name + "/beta", TensorT<T>(Shape{c}));
    running_mean = &ps.add(name + "/running_mean", TensorT<T>(Shape{c}), false);
    running_var = &ps.add(name + "/running_var", TensorT<T>::full(Shape{c}, T(1)), false);
    batches = &ps.add(name + "/batches_seen", TensorT<T>(Shape{1}), false);
  }

  VarT<T> forward(CtxT<T>& ctx, const VarT<T>& x) const {
    int64_t seen = static_cast<int64_t>(batches->value.data()[0]);
    VarT<T> y = ops::batch_norm(ctx, x, ctx.use(*gamma), ctx.use(*beta),
                                running_mean->value, running_var->value, seen, momentum, eps);
    batches->value.mutable_data()[0] = static_cast<T>(seen);
    return y;
  }

  void cost(CostReport& r, const std::string& name, int64_t rows) const {
    auto& e = r.add(name);
    e.params = 4 * c + 1;
    e.trainable_params = 2 * c;
    e.flops = rows * c * r.convention.norm;
  }
};

// ---------------------------------------------------------------------------
// Conv1d (channels last)
// ---------------------------------------------------------------------------
template <typename T>
struct Conv1dT {
  ParameterT<T>* w = nullptr;
  ParameterT<T>* b = nullptr;
  int k = 0, cin = 0, cout = 0, stride = 1, groups = 1;
  ops::Pad pad = ops::Pad::kValid;

  void build(ParamStoreT<T>& ps, RngStream& rng, const std::string& name, int k_, int cin_,
             int cout_, int stride_, int groups_, ops::Pad pad_, bool bias = true) {
    k = k_;
    cin = cin_;
    cout = cout_;
    stride = stride_;
    groups = groups_;
    pad = pad_;
    if (cin % groups || cout % groups)
      throw ConfigError("conv " + name + ": channels not divisible by groups");
    w = &ps.add(name + "/w", trunc_normal_init<T>({k, cin / groups, cout}, rng));
    if (bias) b = &ps.add(name + "/b", TensorT<T>(Shape{cout}));
  }

  VarT<T> forward(CtxT<T>& ctx, const VarT<T>& x) const {
    return ops::conv1d(ctx, x, ctx.use(*w), b ? ctx.use(*b) : VarT<T>{}, stride, groups, pad);
  }

  int out_len(int t) const {
    return pad == ops::Pad::kValid ? (t - k) / stride + 1 : (t + stride - 1) / stride;
  }

  void cost(CostReport& r, const std::string& name, int64_t batch, int tin) const {
    auto& e = r.add(name);
    e.params = w->value.numel() + (b ? b->value.numel() : 0);
    e.trainable_params = e.params;
    const int64_t to = out_len(tin);
    e.flops = batch * to *
              (int64_t(r.convention.mac) * k * (cin / groups) * cout + (b ? cout : 0));
  }
};

// ---------------------------------------------------------------------------
// Multi-head self-attention. head_dim defaults to dm/H (the standard split);
// model builders may widen it (head_dim = slice width) to match the paper's
// per-head projection sizing.
// ---------------------------------------------------------------------------
template <typename T>
struct MultiHeadSelfAttentionT {
  LinearT<T> wq, wk, wv, wo;
  int dm = 0, heads = 0, head_dim = 0;

  void build(ParamStoreT<T>& ps, RngStream& rng, const std::string& name, int dm_, int heads_,
             int head_dim_ = -1) {
    dm = dm_;
    heads = heads_;
    if (head_dim_ < 0) {
      if (dm % heads)
        throw ShapeError("msa " + name + ": width " + std::to_string(dm) +
                         " not divisible by " + std::to_string(heads) + " heads");
      head_dim = dm / heads;
    } else {
      head_dim = head_dim_;
    }
    const int inner = heads * head_dim;
    wq.build(ps, rng, name + "/wq", dm, inner);
    wk.build(ps, rng, name + "/wk", dm, inner);
    wv.build(ps, rng, name + "/wv", dm, inner);
    wo.build(ps, rng, name + "/wo", inner, dm);
  }

  /// x: [B,N,dm] -> [B,N,dm]
  VarT<T> forward(CtxT<T>& ctx, const VarT<T>& x) const {
    VarT<T> q = ops::split_heads(ctx, wq.forward(ctx, x), heads);
    VarT<T> k = ops::split_heads(ctx, wk.forward(ctx, x), heads);
    VarT<T> v = ops::split_heads(ctx, wv.forward(ctx, x), heads);
    VarT<T> scores = ops::scale(ctx, ops::bmm(ctx, q, k, /*transB=*/true),
                                T(1.0 / std::sqrt(static_cast<double>(head_dim))));
    VarT<T> probs = ops::softmax(ctx, scores);
    VarT<T> o = ops::merge_heads(ctx, ops::bmm(ctx, probs, v), heads);
    return wo.forward(ctx, o);
  }

  void cost(CostReport& r, const std::string& name, int64_t batch, int n) const {
    const int64_t rows = batch * n;
    wq.cost(r, name + "/wq", rows);
    wk.cost(r, name + "/wk", rows);
    wv.cost(r, name + "/wv", rows);
    auto& e = r.add(name + "/attention");
    // score and value MACs (the N^2 terms), plus scale + softmax
    e.attention_core = batch * heads * int64_t(n) * n * head_dim * 2 * r.convention.mac;
    e.flops = e.attention_core +
              batch * heads * int64_t(n) * n * (1 + r.convention.softmax);
    wo.cost(r, name + "/wo", rows);
  }
};

// ---------------------------------------------------------------------------
// LightConv block: pointwise projection to 2m, GLU gate, depthwise conv with
// softmax-normalized kernels shared across `groups` channel groups, pointwise
// out projection. Kernel parameter count is groups*k.
// ---------------------------------------------------------------------------
template <typename T>
struct LightConvBlockT {
  LinearT<T> win, wout;
  ParameterT<T>* kernel_logits = nullptr;
  int m = 0, k = 3, groups = 4;

  void build(ParamStoreT<T>& ps, RngStream& rng, const std::string& name, int m_, int k_,
             int groups_) {
    m = m_;
    k = k_;
    groups = groups_;
    if (k % 2 == 0) throw ConfigError("lightconv " + name + ": kernel size must be odd");
    if (m % groups)
      throw ConfigError("lightconv " + name + ": width not divisible by weight-sharing groups");
    win.build(ps, rng, name + "/win", m, 2 * m);
    kernel_logits = &ps.add(name + "/kernel", trunc_normal_init<T>({groups, k}, rng));
    wout.build(ps, rng, name + "/wout", m, m);
  }

  /// x: [B,N,m] -> [B,N,m]
  VarT<T> forward(CtxT<T>& ctx, const VarT<T>& x) const {
    VarT<T> u = win.forward(ctx, x);
    VarT<T> a = ops::slice_last(ctx, u, 0, m);
    VarT<T> g = ops::slice_last(ctx, u, m, 2 * m);
    VarT<T> gated = ops::mul(ctx, a, ops::activation(ctx, g, ops::Act::kSigmoid));
    VarT<T> w = ops::softmax(ctx, ctx.use(*kernel_logits));
    VarT<T> c = ops::shared_dconv(ctx, gated, w);
    return wout.forward(ctx, c);
  }

  void cost(CostReport& r, const std::string& name, int64_t batch, int n) const {
    const int64_t rows = batch * n;
    win.cost(r, name + "/win", rows);
    auto& g = r.add(name + "/glu");
    g.flops = rows * m * (r.convention.sigmoid + 1);
    auto& e = r.add(name + "/dconv");
    e.params = e.trainable_params = kernel_logits->value.numel();
    e.flops = int64_t(groups) * k * r.convention.softmax +
              rows * m * k * r.convention.mac;
    wout.cost(r, name + "/wout", rows);
  }
};

// ---------------------------------------------------------------------------
// Transformer feed-forward: Linear(d->hidden), activation, dropout,
// Linear(hidden->d), dropout.
// ---------------------------------------------------------------------------
template <typename T>
struct FeedForwardT {
  LinearT<T> l1, l2;
  ops::Act act = ops::Act::kSwish;
  double dropout = 0.0;
  int d = 0, hidden = 0;

  void build(ParamStoreT<T>& ps, RngStream& rng, const std::string& name, int d_, int hidden_,
             ops::Act act_, double dropout_) {
    d = d_;
    hidden = hidden_;
    act = act_;
    dropout = dropout_;
    l1.build(ps, rng, name + "/l1", d, hidden);
    l2.build(ps, rng, name + "/l2", hidden, d);
  }

  VarT<T> forward(CtxT<T>& ctx, const VarT<T>& x) const {
    VarT<T> h = ops::activation(ctx, l1.forward(ctx, x), act);
    h = ops::dropout(ctx, h, dropout);
    h = l2.forward(ctx, h);
    return ops::dropout(ctx, h, dropout);
  }

  void cost(CostReport& r, const std::string& name, int64_t rows) const {
    l1.cost(r, name + "/l1", rows);
    auto& e = r.add(name + "/act");
    e.flops = rows * hidden * (act == ops::Act::kGelu ? r.convention.gelu : r.convention.swish);
    l2.cost(r, name + "/l2", rows);
  }
};

// ---------------------------------------------------------------------------
// Encoder block shared by the transformer variants. The branch layout over
// the embedding columns depends on the kind:
//   kFullMsa       one MSA over all d columns (ViT baseline)
//   kSensorMsaLite per-sensor MSA on the first half of each sensor's slice,
//                  LightConv over the concatenated second halves (HART)
//   kSensorMsaOnly per-sensor MSA over each sensor's full slice
//   kHalfMsaLite   one MSA over the first d/2 columns, LightConv on the rest
// Sensor s owns columns [s*d/S, (s+1)*d/S); branch outputs are concatenated
// back with their original positions kept in place.
// ---------------------------------------------------------------------------
enum class BlockKind { kFullMsa, kSensorMsaLite, kSensorMsaOnly, kHalfMsaLite };

template <typename T>
struct EncoderBlockT {
  LayerNormT<T> ln1, ln2;
  std::vector<MultiHeadSelfAttentionT<T>> msas;
  LightConvBlockT<T> lite;
  FeedForwardT<T> ff;
  BlockKind kind = BlockKind::kSensorMsaLite;
  bool shared_msa = false;
  int S = 2, d = 0, index = 0;
  double droppath = 0.0;
  bool has_lite() const {
    return kind == BlockKind::kSensorMsaLite || kind == BlockKind::kHalfMsaLite;
  }

  void build(ParamStoreT<T>& ps, RngStream& rng, const std::string& name, BlockKind kind_,
             int S_, int d_, int heads, bool shared, double dropout, double droppath_,
             int lite_kernel, int lite_groups, ops::Act ff_act, int index_) {
    kind = kind_;
    S = S_;
    d = d_;
    shared_msa = shared;
    droppath = droppath_;
    index = index_;
    if (d % (2 * S)) throw ConfigError("block " + name + ": d must be divisible by 2*S");
    ln1.build(ps, name + "/ln1", d);
    switch (kind) {
      case BlockKind::kFullMsa: {
        msas.resize(1);
        msas[0].build(ps, rng, name + "/msa", d, heads, d);
        break;
      }
      case BlockKind::kSensorMsaLite: {
        const int w = d / (2 * S);
        const int n = shared ? 1 : S;
        msas.resize(n);
        for (int i = 0; i < n; ++i)
          msas[i].build(ps, rng, name + (shared ? "/msa" : "/msa" + std::to_string(i)), w,
                        heads, w);
        lite.build(ps, rng, name + "/lite", d / 2, lite_kernel, lite_groups);
        break;
      }
      case BlockKind::kSensorMsaOnly: {
        const int w = d / S;
        const int n = shared ? 1 : S;
        msas.resize(n);
        for (int i = 0; i < n; ++i)
          msas[i].build(ps, rng, name + (shared ? "/msa" : "/msa" + std::to_string(i)), w,
                        heads, w);
        break;
      }
      case BlockKind::kHalfMsaLite: {
        msas.resize(1);
        msas[0].build(ps, rng, name + "/msa", d / 2, heads, d / 4);
        lite.build(ps, rng, name + "/lite", d / 2, lite_kernel, lite_groups);
        break;
      }
    }
    ln2.build(ps, name + "/ln2", d);
    ff.build(ps, rng, name + "/ff", d, 2 * d, ff_act, dropout);
  }

  VarT<T> forward(CtxT<T>& ctx, const VarT<T>& x) const {
    VarT<T> y = ln1.forward(ctx, x);
    VarT<T> branch;
    const bool tracing = [&] {
      if constexpr (std::is_same_v<T, float>)
        return ctx.trace && ctx.trace->target_block == index;
      else
        return false;
    }();

    switch (kind) {
      case BlockKind::kFullMsa: {
        branch = msas[0].forward(ctx, y);
        break;
      }
      case BlockKind::kSensorMsaLite: {
        const int sw = d / S, w = d / (2 * S);
        std::vector<VarT<T>> msa_out(S), lite_in;
        for (int s = 0; s < S; ++s) {
          VarT<T> xs = ops::slice_last(ctx, y, s * sw, s * sw + w);
          msa_out[s] = msas[shared_msa ? 0 : s].forward(ctx, xs);
          lite_in.push_back(ops::slice_last(ctx, y, s * sw + w, (s + 1) * sw));
        }
        VarT<T> lo = lite.forward(ctx, ops::concat_last(ctx, lite_in));
        if constexpr (std::is_same_v<T, float>) {
          if (tracing) {
            ctx.trace->msa_out.clear();
            for (auto& m : msa_out) ctx.trace->msa_out.push_back(m.v);
            ctx.trace->lite_out = {lo.v};
          }
        }
        std::vector<VarT<T>> parts;
        for (int s = 0; s < S; ++s) {
          parts.push_back(msa_out[s]);
          parts.push_back(ops::slice_last(ctx, lo, s * w, (s + 1) * w));
        }
        branch = ops::concat_last(ctx, parts);
        break;
      }
      case BlockKind::kSensorMsaOnly: {
        const int sw = d / S;
        std::vector<VarT<T>> parts;
        for (int s = 0; s < S; ++s) {
          VarT<T> xs = ops::slice_last(ctx, y, s * sw, (s + 1) * sw);
          parts.push_back(msas[shared_msa ? 0 : s].forward(ctx, xs));
        }
        if constexpr (std::is_same_v<T, float>) {
          if (tracing) {
            ctx.trace->msa_out.clear();
            for (auto& m : parts) ctx.trace->msa_out.push_back(m.v);
          }
        }
        branch = ops::concat_last(ctx, parts);
        break;
      }
      case BlockKind::kHalfMsaLite: {
        VarT<T> a = msas[0].forward(ctx, ops::slice_last(ctx, y, 0, d / 2));
        VarT<T> b = lite.forward(ctx, ops::slice_last(ctx, y, d / 2, d));
        if constexpr (std::is_same_v<T, float>) {
          if (tracing) {
            ctx.trace->msa_out = {a.v};
            ctx.trace->lite_out = {b.v};
          }
        }
        branch = ops::concat_last(ctx, std::vector<VarT<T>>{a, b});
        break;
      }
    }

    VarT<T> e1 = ops::add(ctx, x, ops::drop_path(ctx, branch, droppath));
    VarT<T> f = ff.forward(ctx, ln2.forward(ctx, e1));
    return ops::add(ctx, e1, ops::drop_path(ctx, f, droppath));
  }

  /// Per-sensor MSA branch outputs from a normalized embedding partition,
  /// pre-FF and pre-concat. Row-wise layer norm couples every column of a
  /// row, so slice-locality is a property of the branch map itself; this is
  /// the surface isolation tests drive.
  std::vector<TensorT<T>> msa_branches(CtxT<T>& ctx, const VarT<T>& y) const {
    std::vector<TensorT<T>> out;
    if (kind == BlockKind::kSensorMsaLite) {
      const int sw = d / S, w = d / (2 * S);
      for (int s = 0; s < S; ++s) {
        VarT<T> xs = ops::slice_last(ctx, y, s * sw, s * sw + w);
        out.push_back(msas[shared_msa ? 0 : s].forward(ctx, xs).v);
      }
    } else if (kind == BlockKind::kSensorMsaOnly) {
      const int sw = d / S;
      for (int s = 0; s < S; ++s) {
        VarT<T> xs = ops::slice_last(ctx, y, s * sw, (s + 1) * sw);
        out.push_back(msas[shared_msa ? 0 : s].forward(ctx, xs).v);
      }
    } else {
      throw ConfigError("msa_branches: block kind has no sensor branches");
    }
    return out;
  }

  void cost(CostReport& r, const std::string& name, int64_t batch, int n) const {
    ln1.cost(r, name + "/ln1", batch * n);
    switch (kind) {
      case BlockKind::kFullMsa:
        msas[0].cost(r, name + "/msa", batch, n);
        break;
      case BlockKind::kSensorMsaLite:
        for (int s = 0; s < S; ++s)
          msas[shared_msa ? 0 : s].cost(
              r, name + "/msa" + std::to_string(s) + (shared_msa ? "(shared)" : ""), batch, n);
        lite.cost(r, name + "/lite", batch, n);
        break;
      case BlockKind::kSensorMsaOnly:
        for (int s = 0; s < S; ++s)
          msas[shared_msa ? 0 : s].cost(
              r, name + "/msa" + std::to_string(s) + (shared_msa ? "(shared)" : ""), batch, n);
        break;
      case BlockKind::kHalfMsaLite:
        msas[0].cost(r, name + "/msa", batch, n);
        lite.cost(r, name + "/lite", batch, n);
        break;
    }
    if (shared_msa) fix_shared_param_double_count(r, name);
    ln2.cost(r, name + "/ln2", batch * n);
    ff.cost(r, name + "/ff", batch * n);
    auto& e = r.add(name + "/residuals");
    e.flops = 2 * batch * int64_t(n) * d * r.convention.add;
  }

 private:
  // Shared-MSA variants execute the same parameters S times; FLOPs repeat
  // but parameters must be counted once (under the first sensor's entry).
  void fix_shared_param_double_count(CostReport& r, const std::string& name) const {
    const std::string keep = name + "/msa0(shared)";
    const std::string prefix = name + "/msa";
    for (auto& e : r.entries) {
      if (e.name.rfind(prefix, 0) != 0) continue;
      if (e.name.find("(shared)") == std::string::npos) continue;
      if (e.name.rfind(keep, 0) == 0) continue;
      e.params = 0;
      e.trainable_params = 0;
    }
  }
};

}  // namespace hart::nn
