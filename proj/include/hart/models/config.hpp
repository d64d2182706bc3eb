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

#include "json.hpp"

#include "hart/error.hpp"

namespace hart::models {

inline const std::vector<std::string> kVariants = {
    "vit", "vit+liteconv", "vit+swmsa", "hart", "hart_one_msa",
    "mobilehart_xs", "mobilehart_xxs"};

inline bool is_mobile_variant(const std::string& v) {
  return v.rfind("mobilehart", 0) == 0;
}

/// Hyperparameters for the transformer family (everything except mobilehart).
struct HartConfig {
  std::string variant = "hart";
  int S = 2;            // sensors (3 channels each)
  int W = 128;          // window length
  int K = 16;           // frame (patch) length, stride equals kernel
  int d = 192;          // embedding size
  int L = 6;            // encoder blocks
  int H = 3;            // attention heads
  int num_classes = 6;
  double dropout = 0.3;
  double droppath = 0.1;      // max rate; block l uses droppath*l/L
  int lightconv_kernel = 3;
  int lightconv_groups = 4;   // weight-sharing groups
  int vit_head_hidden = 1024; // CLS head MLP width (ViT baseline)

  int frames() const { return W / K; }

  void validate() const {
    if (W <= 0 || K <= 0 || W % K)
      throw ConfigError("config: window W must be a positive multiple of frame K");
    if (S < 1) throw ConfigError("config: need at least one sensor");
    if (d % 4 || d % (2 * S))
      throw ConfigError("config: d must be divisible by 4 and by 2*S (got d=" +
                        std::to_string(d) + ", S=" + std::to_string(S) + ")");
    if (L < 1 || H < 1) throw ConfigError("config: L and H must be >= 1");
    if (num_classes < 2) throw ConfigError("config: need at least two classes");
    if (dropout < 0 || dropout >= 1 || droppath < 0 || droppath >= 1)
      throw ConfigError("config: dropout/droppath must be in [0,1)");
    if (lightconv_kernel % 2 == 0) throw ConfigError("config: lightconv kernel must be odd");
    if ((d / 2) % lightconv_groups)
      throw ConfigError("config: lightconv width d/2 not divisible by its groups");
  }

  nlohmann::json to_json() const {
    return {{"variant", variant}, {"S", S}, {"W", W}, {"K", K}, {"d", d}, {"L", L},
            {"H", H}, {"num_classes", num_classes}, {"dropout", dropout},
            {"droppath", droppath}, {"lightconv_kernel", lightconv_kernel},
            {"lightconv_groups", lightconv_groups}, {"vit_head_hidden", vit_head_hidden}};
  }

  static HartConfig from_json(const nlohmann::json& j) {
    HartConfig c;
    c.variant = j.value("variant", c.variant);
    c.S = j.value("S", c.S);
    c.W = j.value("W", c.W);
    c.K = j.value("K", c.K);
    c.d = j.value("d", c.d);
    c.L = j.value("L", c.L);
    c.H = j.value("H", c.H);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.dropout = j.value("dropout", c.dropout);
    c.droppath = j.value("droppath", c.droppath);
    c.lightconv_kernel = j.value("lightconv_kernel", c.lightconv_kernel);
    c.lightconv_groups = j.value("lightconv_groups", c.lightconv_groups);
    c.vit_head_hidden = j.value("vit_head_hidden", c.vit_head_hidden);
    return c;
  }
};

/// Size presets: tiny d=192/H=3/L=6, small d=384/H=6/L=12, base d=768/H=12/L=12.
inline HartConfig preset_config(const std::string& preset) {
  HartConfig c;
  if (preset == "tiny") {
    c.d = 192;
    c.H = 3;
    c.L = 6;
  } else if (preset == "small") {
    c.d = 384;
    c.H = 6;
    c.L = 12;
  } else if (preset == "base") {
    c.d = 768;
    c.H = 12;
    c.L = 12;
  } else if (preset == "micro") {  // synthetic-scale config for quick runs
    c.d = 48;
    c.H = 2;
    c.L = 2;
  } else {
    throw ConfigError("unknown preset: " + preset + " (expected tiny|small|base|micro)");
  }
  return c;
}

/// One downsampling stage of the mobile hybrid: an MV2 chain, optionally
/// followed by a transformer block of the given width/depth.
struct MobileStage {
  int out_channels = 0;
  int repeat = 1;       // MV2 count; the first one applies the stride
  int stride = 1;
  int transformer_d = 0;  // 0 = no transformer block in this stage
  int transformer_depth = 0;
};

struct MobileHartConfig {
  std::string preset = "xxs";  // xs or xxs
  int S = 2;
  int W = 128;
  int num_classes = 6;
  int stem_channels = 16;
  int expansion = 2;
  int heads = 2;
  int patch = 2;  // unfold frame length inside the transformer blocks
  int final_channels = 320;
  double dropout = 0.1;
  double droppath = 0.05;
  int lightconv_kernel = 3;
  int lightconv_groups = 4;
  std::vector<MobileStage> stages;

  void validate() const {
    if (S < 1) throw ConfigError("mobile config: need at least one sensor");
    if (stem_channels % 2) throw ConfigError("mobile config: stem channels must be even");
    int t = (W + 1) / 2;  // stem stride 2
    for (const auto& st : stages) {
      if (st.out_channels % 2)
        throw ConfigError("mobile config: stage channels must be even (sensor-wise halves)");
      t = (t + st.stride - 1) / st.stride;
      if (st.transformer_d > 0) {
        if (st.transformer_d % (2 * S) || st.transformer_d % 4)
          throw ConfigError("mobile config: transformer width must be divisible by 4 and 2*S");
        if ((st.transformer_d / 2) % lightconv_groups)
          throw ConfigError("mobile config: lightconv width not divisible by groups");
        if (t % patch || t / patch < 1)
          throw ConfigError("mobile config: sequence length " + std::to_string(t) +
                            " not divisible by patch " + std::to_string(patch));
      }
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json st = nlohmann::json::array();
    for (const auto& s : stages)
      st.push_back({{"out_channels", s.out_channels}, {"repeat", s.repeat},
                    {"stride", s.stride}, {"transformer_d", s.transformer_d},
                    {"transformer_depth", s.transformer_depth}});
    return {{"variant", "mobilehart_" + preset}, {"preset", preset}, {"S", S}, {"W", W},
            {"num_classes", num_classes}, {"stem_channels", stem_channels},
            {"expansion", expansion}, {"heads", heads}, {"patch", patch},
            {"final_channels", final_channels}, {"dropout", dropout},
            {"droppath", droppath}, {"lightconv_kernel", lightconv_kernel},
            {"lightconv_groups", lightconv_groups}, {"stages", st}};
  }

  static MobileHartConfig from_json(const nlohmann::json& j) {
    MobileHartConfig c = mobile_preset(j.value("preset", std::string("xxs")));
    c.S = j.value("S", c.S);
    c.W = j.value("W", c.W);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.dropout = j.value("dropout", c.dropout);
    c.droppath = j.value("droppath", c.droppath);
    if (j.contains("stages")) {
      c.stages.clear();
      for (const auto& s : j["stages"]) {
        MobileStage st;
        st.out_channels = s.value("out_channels", 0);
        st.repeat = s.value("repeat", 1);
        st.stride = s.value("stride", 1);
        st.transformer_d = s.value("transformer_d", 0);
        st.transformer_depth = s.value("transformer_depth", 0);
        c.stages.push_back(st);
      }
      c.stem_channels = j.value("stem_channels", c.stem_channels);
      c.expansion = j.value("expansion", c.expansion);
      c.heads = j.value("heads", c.heads);
      c.patch = j.value("patch", c.patch);
      c.final_channels = j.value("final_channels", c.final_channels);
    }
    return c;
  }

  /// XS and XXS schedules (1D translation of the cited mobile-vision presets;
  /// transformer depths 2/4/3).
  static MobileHartConfig mobile_preset(const std::string& preset) {
    MobileHartConfig c;
    c.preset = preset;
    if (preset == "xxs") {
      c.expansion = 2;
      c.final_channels = 320;
      c.stages = {{16, 1, 1, 0, 0},
                  {24, 3, 2, 0, 0},
                  {48, 1, 2, 64, 2},
                  {64, 1, 2, 80, 4},
                  {80, 1, 2, 96, 3}};
    } else if (preset == "xs") {
      c.expansion = 4;
      c.final_channels = 384;
      c.stages = {{32, 1, 1, 0, 0},
                  {48, 3, 2, 0, 0},
                  {64, 1, 2, 96, 2},
                  {80, 1, 2, 120, 4},
                  {96, 1, 2, 144, 3}};
    } else {
      throw ConfigError("unknown mobilehart preset: " + preset + " (expected xs|xxs)");
    }
    return c;
  }
};

}  // namespace hart::models
