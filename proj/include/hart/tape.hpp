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

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hart/rng.hpp"
#include "hart/tensor.hpp"

namespace hart {

/// Named trainable tensor with a persistently accumulated gradient.
template <typename T>
struct ParameterT {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;
  bool trainable = true;

  void zero_grad() {
    T* g = grad.mutable_data();
    std::fill(g, g + grad.numel(), T(0));
  }
};

/// Owns a model's parameters and buffers in registration order (which is
/// also checkpoint manifest order). Names are unique.
template <typename T>
class ParamStoreT {
 public:
  ParameterT<T>& add(const std::string& name, TensorT<T> value, bool trainable = true) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    auto p = std::make_unique<ParameterT<T>>();
    p->name = name;
    p->grad = TensorT<T>(value.shape());
    p->value = std::move(value);
    p->trainable = trainable;
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  ParameterT<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  size_t size() const { return params_.size(); }
  ParameterT<T>& operator[](size_t i) { return *params_[i]; }
  const ParameterT<T>& operator[](size_t i) const { return *params_[i]; }

  int64_t count(bool trainable_only) const {
    int64_t n = 0;
    for (const auto& p : params_)
      if (!trainable_only || p->trainable) n += p->value.numel();
    return n;
  }

  void zero_grads() {
    for (auto& p : params_)
      if (p->trainable) p->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<ParameterT<T>>> params_;
  std::unordered_map<std::string, size_t> index_;
};

/// Handle to a value in a computation; id < 0 means not recorded (no grad).
template <typename T>
struct VarT {
  TensorT<T> v;
  int id = -1;
};

/// Reverse-mode tape. Nodes are recorded in execution order (which is a
/// topological order), and backward() walks them in reverse, accumulating
/// gradients per node.
template <typename T>
class TapeT {
 public:
  using BackFn = std::function<void(TapeT&, const TensorT<T>&)>;

  int record(const TensorT<T>& value, BackFn back) {
    nodes_.push_back(Node{value.shape(), std::move(back)});
    grads_.emplace_back();
    return static_cast<int>(nodes_.size()) - 1;
  }

  int leaf(const TensorT<T>& value) { return record(value, nullptr); }

  /// Add g into node id's gradient accumulator.
  void accumulate(int id, const TensorT<T>& g) {
    if (id < 0) return;
    TensorT<T>& slot = grads_[static_cast<size_t>(id)];
    if (!slot.defined()) {
      slot = g;
      return;
    }
    T* a = slot.mutable_data();
    const T* b = g.data();
    const int64_t n = slot.numel();
    for (int64_t i = 0; i < n; ++i) a[i] += b[i];
  }

  /// Seed the root (a scalar) with 1 and run all backward functions.
  void backward(int root) {
    if (root < 0 || root >= static_cast<int>(nodes_.size()))
      throw Error("backward: root is not on the tape");
    if (shape_numel(nodes_[static_cast<size_t>(root)].shape) != 1)
      throw ShapeError("backward: loss must be scalar");
    accumulate(root, TensorT<T>::full(nodes_[static_cast<size_t>(root)].shape, T(1)));
    for (int i = root; i >= 0; --i) {
      const auto& node = nodes_[static_cast<size_t>(i)];
      const TensorT<T>& g = grads_[static_cast<size_t>(i)];
      if (node.back && g.defined()) node.back(*this, g);
    }
  }

  /// Gradient of node id (zeros if it never received one).
  TensorT<T> grad(int id) const {
    const TensorT<T>& g = grads_[static_cast<size_t>(id)];
    if (g.defined()) return g;
    return TensorT<T>(nodes_[static_cast<size_t>(id)].shape);
  }

  size_t size() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    grads_.clear();
  }

 private:
  struct Node {
    Shape shape;
    BackFn back;
  };
  std::vector<Node> nodes_;
  std::vector<TensorT<T>> grads_;
};

enum class Mode { kTrain, kEval };

/// Per-forward execution context: the tape (absent for pure inference),
/// train/eval mode, the stochastic-op stream, and the set of parameters
/// touched by this forward (for gradient hand-off after backward()).
template <typename T>
struct CtxT {
  TapeT<T>* tape = nullptr;
  Mode mode = Mode::kEval;
  RngStream* rng = nullptr;
  uint64_t stochastic_calls = 0;
  std::vector<std::pair<ParameterT<T>*, int>> touched;
  std::unordered_map<const ParameterT<T>*, int> touched_index;
  struct BlockTrace* trace = nullptr;  // test hook, see models

  bool training() const { return mode == Mode::kTrain; }

  /// Put a parameter on the tape (once; shared parameters reuse the leaf so
  /// gradients from every use accumulate).
  VarT<T> use(ParameterT<T>& p) {
    if (!tape) return VarT<T>{p.value, -1};
    auto it = touched_index.find(&p);
    if (it != touched_index.end()) return VarT<T>{p.value, it->second};
    const int id = tape->leaf(p.value);
    touched_index.emplace(&p, id);
    touched.emplace_back(&p, id);
    return VarT<T>{p.value, id};
  }

  VarT<T> input(const TensorT<T>& x) {
    return VarT<T>{x, tape ? tape->leaf(x) : -1};
  }

  /// Substream for the next stochastic op, keyed by op name and call index.
  RngStream stream(std::string_view op) {
    if (!rng) throw Error("stochastic op in training mode without an RNG stream");
    return rng->derive(op, stochastic_calls++);
  }

  /// Run backward from loss and fold tape gradients into Parameter::grad.
  void backward(const VarT<T>& loss) {
    if (!tape) throw Error("backward called without a tape");
    tape->backward(loss.id);
    for (auto& [param, id] : touched) {
      if (!param->trainable) continue;
      TensorT<T> g = tape->grad(id);
      T* dst = param->grad.mutable_data();
      const T* src = g.data();
      const int64_t n = g.numel();
      for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
    }
  }
};

using Ctx = CtxT<float>;
using Var = VarT<float>;
using Tape = TapeT<float>;
using Parameter = ParameterT<float>;
using ParamStore = ParamStoreT<float>;

}  // namespace hart
