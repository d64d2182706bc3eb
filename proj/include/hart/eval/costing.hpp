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

#include "hart/cost.hpp"
#include "hart/models/model.hpp"

namespace hart::eval {

/// Exact parameter count from the model's parameter inventory.
template <typename T>
int64_t count_params(const models::ModelT<T>& m, bool trainable_only = true) {
  return m.params().count(trainable_only);
}

/// Symbolic per-layer cost report (no execution) for one forward pass over
/// `batch` windows at the model's input shape.
template <typename T>
CostReport count_costs(const models::ModelT<T>& m, int batch = 1) {
  CostReport r;
  m.append_cost(r, batch);
  // Cross-check: the structural walk must account for every parameter.
  const int64_t inv = m.params().count(false);
  if (r.total_params() != inv)
    throw Error("cost report parameter total " + std::to_string(r.total_params()) +
                " disagrees with parameter inventory " + std::to_string(inv));
  return r;
}

}  // namespace hart::eval
