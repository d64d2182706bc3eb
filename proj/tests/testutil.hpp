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
#include <functional>
#include <string>
#include <vector>

#include "hart/ops.hpp"
#include "hart/rng.hpp"
#include "hart/tape.hpp"
#include "hart/tensor.hpp"

namespace testutil {

template <typename T>
hart::TensorT<T> random_tensor(hart::Shape shape, hart::RngStream& rng, double lo = -1.0,
                               double hi = 1.0) {
  hart::TensorT<T> t(std::move(shape));
  T* p = t.mutable_data();
  for (int64_t i = 0; i < t.numel(); ++i)
    p[i] = static_cast<T>(lo + (hi - lo) * rng.uniform());
  return t;
}

/// Central finite-difference check of d(scalar f(inputs))/d(inputs[k]).
/// `f` evaluates the function from plain tensors; analytic gradients come
/// from the caller (computed once via the tape). Coordinates may be
/// subsampled for large tensors. Tolerances follow the precision: combined
/// |a - fd| <= atol + rtol*max(|a|,|fd|).
template <typename T>
struct GradCheck {
  double rtol = std::is_same_v<T, double> ? 1e-6 : 1e-3;
  double atol = std::is_same_v<T, double> ? 1e-9 : 2e-4;
  double step = std::is_same_v<T, double> ? 1e-5 : 5e-3;
  int max_coords_per_tensor = 64;
  std::string fail;

  bool check(std::vector<hart::TensorT<T>> inputs,
             const std::function<double(const std::vector<hart::TensorT<T>>&)>& f,
             const std::vector<hart::TensorT<T>>& analytic, hart::RngStream& rng) {
    for (size_t k = 0; k < inputs.size(); ++k) {
      const int64_t n = inputs[k].numel();
      std::vector<int64_t> coords;
      if (n <= max_coords_per_tensor) {
        for (int64_t i = 0; i < n; ++i) coords.push_back(i);
      } else {
        for (int i = 0; i < max_coords_per_tensor; ++i)
          coords.push_back(static_cast<int64_t>(rng.next_u64() % static_cast<uint64_t>(n)));
      }
      for (int64_t c : coords) {
        const T orig = inputs[k].data()[c];
        const double h = step * std::max(1.0, std::fabs(static_cast<double>(orig)));
        inputs[k].mutable_data()[c] = orig + static_cast<T>(h);
        const double fp = f(inputs);
        inputs[k].mutable_data()[c] = orig - static_cast<T>(h);
        const double fm = f(inputs);
        inputs[k].mutable_data()[c] = orig;
        const double fd = (fp - fm) / (2 * h);
        const double a = static_cast<double>(analytic[k].data()[c]);
        const double err = std::fabs(a - fd);
        if (err > atol + rtol * std::max(std::fabs(a), std::fabs(fd))) {
          fail = "input " + std::to_string(k) + " coord " + std::to_string(c) +
                 ": analytic " + std::to_string(a) + " vs fd " + std::to_string(fd);
          return false;
        }
      }
    }
    return true;
  }
};

/// Gradcheck driver for an op expressed over Vars: leafs every input,
/// runs fwd once for analytic grads, then FD via re-evaluation.
template <typename T>
bool check_op_gradients(
    const std::vector<hart::TensorT<T>>& inputs,
    const std::function<hart::VarT<T>(hart::CtxT<T>&, const std::vector<hart::VarT<T>>&)>& op,
    uint64_t seed = 7, std::string* why = nullptr, int max_coords = 64) {
  auto eval = [&](const std::vector<hart::TensorT<T>>& ins) {
    hart::CtxT<T> ctx;  // no tape
    std::vector<hart::VarT<T>> vars;
    for (const auto& t : ins) vars.push_back(hart::VarT<T>{t, -1});
    hart::VarT<T> out = op(ctx, vars);
    double s = 0;  // reduce to scalar by summing (linear, exact gradient seed)
    for (int64_t i = 0; i < out.v.numel(); ++i) s += static_cast<double>(out.v.data()[i]);
    return s;
  };

  hart::TapeT<T> tape;
  hart::CtxT<T> ctx;
  ctx.tape = &tape;
  std::vector<hart::VarT<T>> vars;
  for (const auto& t : inputs) vars.push_back(ctx.input(t));
  hart::VarT<T> out = op(ctx, vars);
  // sum to scalar
  hart::VarT<T> loss = hart::ops::sum_all(ctx, out);
  tape.backward(loss.id);
  std::vector<hart::TensorT<T>> analytic;
  for (const auto& v : vars) analytic.push_back(tape.grad(v.id));

  GradCheck<T> gc;
  gc.max_coords_per_tensor = max_coords;
  hart::RngStream rng(seed);
  const bool ok = gc.check(inputs, eval, analytic, rng);
  if (!ok && why) *why = gc.fail;
  return ok;
}

}  // namespace testutil
