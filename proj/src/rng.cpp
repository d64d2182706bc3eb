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

#include "hart/rng.hpp"

#include <cmath>

namespace hart {

uint64_t RngStream::mix(uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

RngStream RngStream::derive(std::string_view label, uint64_t index) const {
  // FNV-1a over the label, folded into the key, then the index.
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  uint64_t k = mix(key_ ^ h);
  k = mix(k + kGolden * (index + 1));
  return RngStream(k, 0);
}

uint64_t RngStream::next_u64() { return mix(key_ + kGolden * (++counter_)); }

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  // Box-Muller; u1 shifted away from zero so log() stays finite.
  double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double RngStream::truncated_normal(double sigma) {
  for (;;) {
    double z = normal();
    if (std::fabs(z) <= 2.0) return z * sigma;
  }
}

}  // namespace hart
