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

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace hart {

// Fixed FLOP-counting convention, printed in every report. Absolute totals
// are only comparable under a declared convention; orderings and ratios are
// the portable quantities.
struct FlopConvention {
  int mac = 2;        // one multiply-accumulate
  int norm = 5;       // layer/batch norm, per element
  int softmax = 5;    // per element
  int swish = 4;      // per element
  int gelu = 6;       // per element
  int sigmoid = 4;    // per element
  int add = 1;        // residual/bias adds, per element

  nlohmann::json to_json() const {
    return {{"mac", mac},     {"norm_per_element", norm},
            {"softmax_per_element", softmax}, {"swish_per_element", swish},
            {"gelu_per_element", gelu},       {"sigmoid_per_element", sigmoid},
            {"add_per_element", add}};
  }
};

struct CostEntry {
  std::string name;
  int64_t params = 0;           // all tensor elements (incl. buffers)
  int64_t trainable_params = 0; // trainable only
  int64_t flops = 0;            // one forward pass at the report's input shape
  int64_t attention_core = 0;   // the N^2 score/value MAC terms, in FLOPs
};

struct CostReport {
  FlopConvention convention;
  std::vector<CostEntry> entries;

  CostEntry& add(const std::string& name) {
    entries.push_back(CostEntry{name});
    return entries.back();
  }

  int64_t total_params() const {
    int64_t n = 0;
    for (const auto& e : entries) n += e.params;
    return n;
  }
  int64_t total_trainable() const {
    int64_t n = 0;
    for (const auto& e : entries) n += e.trainable_params;
    return n;
  }
  int64_t total_flops() const {
    int64_t n = 0;
    for (const auto& e : entries) n += e.flops;
    return n;
  }
  int64_t total_attention_core() const {
    int64_t n = 0;
    for (const auto& e : entries) n += e.attention_core;
    return n;
  }

  nlohmann::json to_json() const {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& e : entries)
      layers.push_back({{"name", e.name},
                        {"params", e.params},
                        {"trainable_params", e.trainable_params},
                        {"flops", e.flops},
                        {"attention_core_flops", e.attention_core}});
    return {{"convention", convention.to_json()},
            {"total_params", total_params()},
            {"total_trainable_params", total_trainable()},
            {"total_flops", total_flops()},
            {"total_attention_core_flops", total_attention_core()},
            {"layers", layers}};
  }
};

}  // namespace hart
