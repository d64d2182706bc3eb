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
#include <string_view>

namespace hart {

/// Counter-based random stream: output i is splitmix64's output function
/// applied to key + i * golden-ratio increment. The integer stream depends
/// only on (seed, derivation path, counter), never on platform state, so the
/// same seed yields the same stream everywhere. Substreams are derived from
/// (parent key, label, index), which gives every stochastic op its own
/// independent stream keyed by op name and call index.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : key_(mix(seed ^ kDomain)) {}

  /// Independent substream for (label, index), e.g. derive("dropout", call_no).
  RngStream derive(std::string_view label, uint64_t index = 0) const;

  uint64_t next_u64();

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform();

  /// Standard normal via Box-Muller (two uniforms per sample, cosine branch).
  double normal();

  /// Normal(0, sigma) clipped by rejection to |z| <= 2*sigma.
  double truncated_normal(double sigma);

  uint64_t key() const { return key_; }

 private:
  RngStream(uint64_t key, int) : key_(key) {}
  static uint64_t mix(uint64_t z);

  static constexpr uint64_t kDomain = 0x48415254524e4721ULL;
  static constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  uint64_t key_ = 0;
  uint64_t counter_ = 0;
};

}  // namespace hart
