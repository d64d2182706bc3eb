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

#include <memory>

#include "json.hpp"

#include "hart/cost.hpp"
#include "hart/nn.hpp"
#include "hart/tape.hpp"

namespace hart::models {

/// A classifier from window batches [B, W, 3*S] to logits [B, classes].
/// Inference over a frozen model is const and safe from concurrent callers;
/// training mutates parameters through the single tape only.
template <typename T>
class ModelT {
 public:
  virtual ~ModelT() = default;

  struct Features {
    VarT<T> pooled;  // pooled representation entering the head (width = embedding)
    VarT<T> head;    // head feed-forward output feeding the classifier
  };

  virtual Features features(CtxT<T>& ctx, const VarT<T>& x) const = 0;
  virtual VarT<T> forward(CtxT<T>& ctx, const VarT<T>& x) const = 0;
  virtual void append_cost(CostReport& r, int batch) const = 0;
  virtual nlohmann::json config_json() const = 0;
  virtual int num_classes() const = 0;
  virtual int window() const = 0;
  virtual int channels() const = 0;

  ParamStoreT<T>& params() { return params_; }
  const ParamStoreT<T>& params() const { return params_; }

 protected:
  mutable ParamStoreT<T> params_;

  void check_input(const TensorT<T>& x) const {
    if (x.rank() != 3 || x.dim(1) != window() || x.dim(2) != channels())
      throw ShapeError("model expects input [B," + std::to_string(window()) + "," +
                       std::to_string(channels()) + "], got " + shape_str(x.shape()));
  }
};

using Model = ModelT<float>;

}  // namespace hart::models
