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

// The transformer family over sensor windows:
//   vit           shared frame projection, class token readout, full-width MSA
//   vit+liteconv  sensor-wise stem, one MSA on half the width, LightConv on the rest
//   vit+swmsa     sensor-wise stem, per-sensor full-slice MSAs, no LightConv
//   hart          sensor-wise stem, per-sensor half-slice MSAs + LightConv
//   hart_one_msa  hart with one MSA parameter set shared across sensors
// Frame projections use d/S filters per sensor with stride equal to the
// kernel; embeddings get learnable positions; readout is GAP (CLS for vit).
template <typename T>
class TransformerModelT : public ModelT<T> {
 public:
  explicit TransformerModelT(const HartConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const bool known =
        cfg_.variant == "vit" || cfg_.variant == "vit+liteconv" ||
        cfg_.variant == "vit+swmsa" || cfg_.variant == "hart" ||
        cfg_.variant == "hart_one_msa";
    if (!known) throw ConfigError("transformer model: unknown variant " + cfg_.variant);
    is_vit_ = cfg_.variant == "vit";
    RngStream rng = RngStream(seed).derive("init");
    auto& ps = this->params_;

    const int n = cfg_.frames();
    if (is_vit_) {
      stem_.resize(1);
      stem_[0].build(ps, rng, "stem/proj", cfg_.K, 3 * cfg_.S, cfg_.d, cfg_.K, 1,
                     ops::Pad::kValid);
      cls_ = &ps.add("cls", nn::trunc_normal_init<T>({cfg_.d}, rng));
      pos_ = &ps.add("pos", nn::trunc_normal_init<T>({n + 1, cfg_.d}, rng));
    } else {
      stem_.resize(cfg_.S);
      for (int s = 0; s < cfg_.S; ++s)
        stem_[s].build(ps, rng, "stem/sensor" + std::to_string(s), cfg_.K, 3,
                       cfg_.d / cfg_.S, cfg_.K, 1, ops::Pad::kValid);
      pos_ = &ps.add("pos", nn::trunc_normal_init<T>({n, cfg_.d}, rng));
    }

    nn::BlockKind kind;
    bool shared = false;
    if (cfg_.variant == "vit") kind = nn::BlockKind::kFullMsa;
    else if (cfg_.variant == "vit+liteconv") kind = nn::BlockKind::kHalfMsaLite;
    else if (cfg_.variant == "vit+swmsa") kind = nn::BlockKind::kSensorMsaOnly;
    else {
      kind = nn::BlockKind::kSensorMsaLite;
      shared = cfg_.variant == "hart_one_msa";
    }
    const ops::Act ff_act = is_vit_ ? ops::Act::kGelu : ops::Act::kSwish;
    blocks_.resize(cfg_.L);
    for (int l = 0; l < cfg_.L; ++l) {
      const double rate = cfg_.droppath * (l + 1) / cfg_.L;
      blocks_[l].build(ps, rng, "block" + std::to_string(l), kind, cfg_.S, cfg_.d, cfg_.H,
                       shared, cfg_.dropout, rate, cfg_.lightconv_kernel,
                       cfg_.lightconv_groups, ff_act, l);
    }

    final_ln_.build(ps, "head/ln", cfg_.d);
    const int head_hidden = is_vit_ ? cfg_.vit_head_hidden : cfg_.d;
    head_ff_.build(ps, rng, "head/ff", cfg_.d, head_hidden);
    classifier_.build(ps, rng, "head/out", head_hidden, cfg_.num_classes);
  }

  /// Patch embedding: sensor-wise convs concatenated over channels (shared
  /// projection for vit), plus learnable positions (and the class token).
  VarT<T> embed(CtxT<T>& ctx, const VarT<T>& x) const {
    this->check_input(x.v);
    VarT<T> e;
    if (is_vit_) {
      e = stem_[0].forward(ctx, x);
    } else {
      std::vector<VarT<T>> parts;
      for (int s = 0; s < cfg_.S; ++s)
        parts.push_back(stem_[s].forward(ctx, ops::slice_last(ctx, x, 3 * s, 3 * s + 3)));
      e = ops::concat_last(ctx, parts);
    }
    if (is_vit_) {
      VarT<T> cls = ops::tile_rows(ctx, ctx.use(*cls_), x.v.dim(0));
      e = ops::concat_rows(ctx, cls, e);
    }
    return ops::add(ctx, e, ctx.use(*pos_));
  }

  typename ModelT<T>::Features features(CtxT<T>& ctx, const VarT<T>& x) const override {
    VarT<T> e = embed(ctx, x);
    for (const auto& b : blocks_) e = b.forward(ctx, e);
    e = final_ln_.forward(ctx, e);
    VarT<T> pooled;
    if (is_vit_) {
      pooled = ops::reshape(ctx, ops::slice_rows(ctx, e, 0, 1), {x.v.dim(0), cfg_.d});
    } else {
      pooled = ops::global_average_pool(ctx, e);
    }
    VarT<T> h = ops::activation(ctx, head_ff_.forward(ctx, pooled),
                                is_vit_ ? ops::Act::kGelu : ops::Act::kSwish);
    h = ops::dropout(ctx, h, cfg_.dropout);
    return {pooled, h};
  }

  VarT<T> forward(CtxT<T>& ctx, const VarT<T>& x) const override {
    return classifier_.forward(ctx, this->features(ctx, x).head);
  }

  void append_cost(CostReport& r, int batch) const override {
    const int n = cfg_.frames();
    const int tokens = is_vit_ ? n + 1 : n;
    if (is_vit_) {
      stem_[0].cost(r, "stem/proj", batch, cfg_.W);
      auto& ec = r.add("cls");
      ec.params = ec.trainable_params = cls_->value.numel();
    } else {
      for (int s = 0; s < cfg_.S; ++s)
        stem_[s].cost(r, "stem/sensor" + std::to_string(s), batch, cfg_.W);
    }
    auto& ep = r.add("pos");
    ep.params = ep.trainable_params = pos_->value.numel();
    ep.flops = int64_t(batch) * tokens * cfg_.d * r.convention.add;
    for (int l = 0; l < cfg_.L; ++l)
      blocks_[l].cost(r, "block" + std::to_string(l), batch, tokens);
    final_ln_.cost(r, "head/ln", int64_t(batch) * tokens);
    auto& eg = r.add(is_vit_ ? "head/cls_readout" : "head/gap");
    if (!is_vit_) eg.flops = int64_t(batch) * n * cfg_.d * r.convention.add;
    head_ff_.cost(r, "head/ff", batch);
    auto& ea = r.add("head/act");
    ea.flops = int64_t(batch) * head_ff_.out *
               (is_vit_ ? r.convention.gelu : r.convention.swish);
    classifier_.cost(r, "head/out", batch);
  }

  nlohmann::json config_json() const override { return cfg_.to_json(); }
  int num_classes() const override { return cfg_.num_classes; }
  int window() const override { return cfg_.W; }
  int channels() const override { return 3 * cfg_.S; }
  const HartConfig& config() const { return cfg_; }

  /// Per-block cost at an arbitrary token count, for complexity-claim checks.
  void block_cost(CostReport& r, int block, int batch, int tokens) const {
    blocks_[block].cost(r, "block" + std::to_string(block), batch, tokens);
  }

 private:
  HartConfig cfg_;
  bool is_vit_ = false;
  std::vector<nn::Conv1dT<T>> stem_;
  ParameterT<T>* pos_ = nullptr;
  ParameterT<T>* cls_ = nullptr;
  std::vector<nn::EncoderBlockT<T>> blocks_;
  nn::LayerNormT<T> final_ln_;
  nn::LinearT<T> head_ff_;
  nn::LinearT<T> classifier_;
};

}  // namespace hart::models
