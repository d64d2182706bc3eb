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

#include <string>
#include <vector>

#include "hart/models/config.hpp"
#include "hart/models/model.hpp"

namespace hart::models {

namespace detail {

/// conv + batch norm + optional swish.
template <typename T>
struct ConvBnActT {
  nn::Conv1dT<T> conv;
  nn::BatchNormT<T> bn;
  bool act = true;

  void build(ParamStoreT<T>& ps, RngStream& rng, const std::string& name, int k, int cin,
             int cout, int stride, int groups, bool act_) {
    act = act_;
    conv.build(ps, rng, name + "/conv", k, cin, cout, stride, groups, ops::Pad::kSame,
               /*bias=*/false);
    bn.build(ps, name + "/bn", cout);
  }

  VarT<T> forward(CtxT<T>& ctx, const VarT<T>& x) const {
    VarT<T> y = bn.forward(ctx, conv.forward(ctx, x));
    return act ? ops::activation(ctx, y, ops::Act::kSwish) : y;
  }

  void cost(CostReport& r, const std::string& name, int64_t batch, int tin) const {
    conv.cost(r, name + "/conv", batch, tin);
    const int to = conv.out_len(tin);
    bn.cost(r, name + "/bn", int64_t(batch) * to);
    if (act) {
      auto& e = r.add(name + "/swish");
      e.flops = int64_t(batch) * to * conv.cout * r.convention.swish;
    }
  }
};

/// Inverted residual: pointwise expand, depthwise conv (stride 1 or 2),
/// pointwise project (norm only); residual iff stride 1 and shapes match.
/// `groups` > 1 makes the pointwise convs sensor-wise.
template <typename T>
struct Mv2BlockT {
  ConvBnActT<T> expand, project;
  ConvBnActT<T> dconv;
  int cin = 0, cout = 0, stride = 1;
  double droppath = 0.0;
  bool residual() const { return stride == 1 && cin == cout; }

  void build(ParamStoreT<T>& ps, RngStream& rng, const std::string& name, int cin_, int cout_,
             int stride_, int expansion, int groups, double droppath_) {
    cin = cin_;
    cout = cout_;
    stride = stride_;
    droppath = droppath_;
    if (stride != 1 && stride != 2) throw ConfigError("mv2 " + name + ": stride must be 1 or 2");
    const int mid = cin * expansion;
    expand.build(ps, rng, name + "/expand", 1, cin, mid, 1, groups, true);
    dconv.build(ps, rng, name + "/dconv", 3, mid, mid, stride, mid, true);
    project.build(ps, rng, name + "/project", 1, mid, cout, 1, groups, false);
  }

  VarT<T> forward(CtxT<T>& ctx, const VarT<T>& x) const {
    VarT<T> y = project.forward(ctx, dconv.forward(ctx, expand.forward(ctx, x)));
    if (!residual()) return y;
    return ops::add(ctx, x, ops::drop_path(ctx, y, droppath));
  }

  int out_len(int t) const { return (t + stride - 1) / stride; }

  void cost(CostReport& r, const std::string& name, int64_t batch, int tin) const {
    expand.cost(r, name + "/expand", batch, tin);
    dconv.cost(r, name + "/dconv", batch, tin);
    const int to = out_len(tin);
    project.cost(r, name + "/project", batch, to);
    if (residual()) {
      auto& e = r.add(name + "/residual");
      e.flops = int64_t(batch) * to * cout * r.convention.add;
    }
  }
};

/// The hybrid attention block: sensor-wise local conv, sensor-wise pointwise
/// projection to the transformer width, unfold into frames, HART encoder
/// blocks (no positional embedding), fold back, pointwise projection, concat
/// with the input, and a standard conv fusion back to C channels.
template <typename T>
struct MobileBlockT {
  ConvBnActT<T> sconv;
  nn::Conv1dT<T> pconv_in;  // plain linear projection feeding the transformer
  std::vector<nn::EncoderBlockT<T>> encoder;
  nn::LayerNormT<T> ln;
  ConvBnActT<T> pconv_out, fuse;
  int c = 0, dm = 0, patch = 2, S = 2;

  void build(ParamStoreT<T>& ps, RngStream& rng, const std::string& name,
             const MobileHartConfig& cfg, int c_, int dm_, int depth,
             const std::vector<double>& droppath_rates) {
    c = c_;
    dm = dm_;
    patch = cfg.patch;
    S = cfg.S;
    if (c % 2) throw ConfigError("mobile block " + name + ": channels must be even");
    sconv.build(ps, rng, name + "/sconv", 3, c, c, 1, S, true);
    pconv_in.build(ps, rng, name + "/pconv_in", 1, c, dm, 1, S, ops::Pad::kSame);
    encoder.resize(depth);
    for (int l = 0; l < depth; ++l)
      encoder[l].build(ps, rng, name + "/enc" + std::to_string(l),
                       nn::BlockKind::kSensorMsaLite, S, dm, cfg.heads, /*shared=*/false,
                       cfg.dropout, droppath_rates[l], cfg.lightconv_kernel,
                       cfg.lightconv_groups, ops::Act::kSwish, l);
    ln.build(ps, name + "/ln", dm);
    pconv_out.build(ps, rng, name + "/pconv_out", 1, dm, c, 1, 1, true);
    fuse.build(ps, rng, name + "/fuse", 3, 2 * c, c, 1, 1, true);
  }

  VarT<T> forward(CtxT<T>& ctx, const VarT<T>& x) const {
    VarT<T> y = pconv_in.forward(ctx, sconv.forward(ctx, x));
    VarT<T> u = ops::unfold_frames(ctx, y, patch);
    for (const auto& b : encoder) u = b.forward(ctx, u);
    u = ln.forward(ctx, u);
    VarT<T> folded = ops::fold_frames(ctx, u, patch);
    VarT<T> a = pconv_out.forward(ctx, folded);
    VarT<T> cat = ops::concat_last(ctx, std::vector<VarT<T>>{a, x});
    return fuse.forward(ctx, cat);
  }

  void cost(CostReport& r, const std::string& name, int64_t batch, int t) const {
    sconv.cost(r, name + "/sconv", batch, t);
    pconv_in.cost(r, name + "/pconv_in", batch, t);
    const int frames = t / patch;
    for (size_t l = 0; l < encoder.size(); ++l)
      encoder[l].cost(r, name + "/enc" + std::to_string(l), batch * patch, frames);
    ln.cost(r, name + "/ln", int64_t(batch) * t);
    pconv_out.cost(r, name + "/pconv_out", batch, t);
    fuse.cost(r, name + "/fuse", batch, t);
  }
};

}  // namespace detail

// MobileHART: sensor-wise stem conv and MV2 chain, then alternating
// downsampling MV2s and hybrid attention blocks, a pointwise expansion,
// GAP, and the class head. Sensor-wise grouping applies up to the input of
// the first attention block.
template <typename T>
class MobileHartModelT : public ModelT<T> {
 public:
  explicit MobileHartModelT(const MobileHartConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    RngStream rng = RngStream(seed).derive("init");
    auto& ps = this->params_;

    // Linear stochastic-depth schedule over residual-bearing units.
    int units = 0;
    for (const auto& st : cfg_.stages) {
      units += st.stride == 1 ? st.repeat : st.repeat - 1;  // stride-1 MV2s carry residuals
      units += st.transformer_depth;
    }
    int unit = 0;
    auto next_rate = [&] { return units ? cfg_.droppath * (++unit) / units : 0.0; };

    stem_.build(ps, rng, "stem", 3, 3 * cfg_.S, cfg_.stem_channels, 2, cfg_.S, true);

    int c = cfg_.stem_channels;
    int t = stem_.conv.out_len(cfg_.W);
    bool sensor_wise = true;
    for (size_t i = 0; i < cfg_.stages.size(); ++i) {
      const auto& st = cfg_.stages[i];
      Stage stage;
      stage.tin = t;
      for (int k = 0; k < st.repeat; ++k) {
        const int stride = k == 0 ? st.stride : 1;
        detail::Mv2BlockT<T> mv2;
        const double rate = (stride == 1 && c == st.out_channels) || (k > 0) ? next_rate() : 0.0;
        mv2.build(ps, rng, "stage" + std::to_string(i) + "/mv2_" + std::to_string(k), c,
                  st.out_channels, stride, cfg_.expansion, sensor_wise ? cfg_.S : 1, rate);
        t = mv2.out_len(t);
        c = st.out_channels;
        stage.mv2.push_back(std::move(mv2));
      }
      if (st.transformer_d > 0) {
        std::vector<double> rates;
        for (int l = 0; l < st.transformer_depth; ++l) rates.push_back(next_rate());
        stage.attn = std::make_unique<detail::MobileBlockT<T>>();
        stage.attn->build(ps, rng, "stage" + std::to_string(i) + "/attn", cfg_, c,
                          st.transformer_d, st.transformer_depth, rates);
        sensor_wise = false;  // features fused from here on
      }
      stages_.push_back(std::move(stage));
    }

    final_conv_.build(ps, rng, "head/expand", 1, c, cfg_.final_channels, 1, 1, true);
    classifier_.build(ps, rng, "head/out", cfg_.final_channels, cfg_.num_classes);
    final_len_ = t;
  }

  typename ModelT<T>::Features features(CtxT<T>& ctx, const VarT<T>& x) const override {
    this->check_input(x.v);
    VarT<T> y = stem_.forward(ctx, x);
    for (const auto& stage : stages_) {
      for (const auto& mv2 : stage.mv2) y = mv2.forward(ctx, y);
      if (stage.attn) y = stage.attn->forward(ctx, y);
    }
    y = final_conv_.forward(ctx, y);
    VarT<T> pooled = ops::global_average_pool(ctx, y);
    pooled = ops::dropout(ctx, pooled, cfg_.dropout);
    return {pooled, pooled};
  }

  VarT<T> forward(CtxT<T>& ctx, const VarT<T>& x) const override {
    return classifier_.forward(ctx, this->features(ctx, x).head);
  }

  void append_cost(CostReport& r, int batch) const override {
    stem_.cost(r, "stem", batch, cfg_.W);
    int t = stem_.conv.out_len(cfg_.W);
    for (size_t i = 0; i < stages_.size(); ++i) {
      for (size_t k = 0; k < stages_[i].mv2.size(); ++k) {
        stages_[i].mv2[k].cost(
            r, "stage" + std::to_string(i) + "/mv2_" + std::to_string(k), batch, t);
        t = stages_[i].mv2[k].out_len(t);
      }
      if (stages_[i].attn)
        stages_[i].attn->cost(r, "stage" + std::to_string(i) + "/attn", batch, t);
    }
    final_conv_.cost(r, "head/expand", batch, t);
    auto& eg = r.add("head/gap");
    eg.flops = int64_t(batch) * t * cfg_.final_channels * r.convention.add;
    classifier_.cost(r, "head/out", batch);
  }

  nlohmann::json config_json() const override { return cfg_.to_json(); }
  int num_classes() const override { return cfg_.num_classes; }
  int window() const override { return cfg_.W; }
  int channels() const override { return 3 * cfg_.S; }
  const MobileHartConfig& config() const { return cfg_; }

 private:
  struct Stage {
    std::vector<detail::Mv2BlockT<T>> mv2;
    std::unique_ptr<detail::MobileBlockT<T>> attn;
    int tin = 0;
  };

  MobileHartConfig cfg_;
  detail::ConvBnActT<T> stem_;
  std::vector<Stage> stages_;
  detail::ConvBnActT<T> final_conv_;
  nn::LinearT<T> classifier_;
  int final_len_ = 0;
};

}  // namespace hart::models
