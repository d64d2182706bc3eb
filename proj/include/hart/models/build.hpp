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

#include <algorithm>
#include <memory>
#include <string>

#include "hart/models/mobile.hpp"
#include "hart/models/transformer.hpp"

namespace hart::models {

/// Compose the full model config JSON from (variant, preset, overrides).
/// Transformer presets: tiny/small/base/micro; mobile presets come from the
/// variant name (mobilehart_xs / mobilehart_xxs).
inline nlohmann::json resolve_model_config(const std::string& variant,
                                           const std::string& preset,
                                           const nlohmann::json& overrides = {}) {
  if (std::find(kVariants.begin(), kVariants.end(), variant) == kVariants.end()) {
    std::string all;
    for (const auto& v : kVariants) all += (all.empty() ? "" : ", ") + v;
    throw ConfigError("unknown variant: " + variant + " (expected one of " + all + ")");
  }
  nlohmann::json j;
  if (is_mobile_variant(variant)) {
    MobileHartConfig c = MobileHartConfig::mobile_preset(variant.substr(11));
    j = c.to_json();
  } else {
    HartConfig c = preset_config(preset.empty() ? "tiny" : preset);
    c.variant = variant;
    j = c.to_json();
  }
  if (overrides.is_object())
    for (auto it = overrides.begin(); it != overrides.end(); ++it) j[it.key()] = it.value();
  return j;
}

/// Build a model with reproducible initialization from the seed. The same
/// seed yields identical initial parameter bytes.
template <typename T>
std::unique_ptr<ModelT<T>> build_model(const nlohmann::json& config, uint64_t seed) {
  const std::string variant = config.value("variant", std::string());
  if (variant.empty()) throw ConfigError("model config is missing 'variant'");
  if (is_mobile_variant(variant))
    return std::make_unique<MobileHartModelT<T>>(MobileHartConfig::from_json(config), seed);
  return std::make_unique<TransformerModelT<T>>(HartConfig::from_json(config), seed);
}

inline std::unique_ptr<Model> build_model_f32(const nlohmann::json& config, uint64_t seed) {
  return build_model<float>(config, seed);
}

}  // namespace hart::models
