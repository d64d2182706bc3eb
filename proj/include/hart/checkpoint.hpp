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

#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hart/tape.hpp"
#include "hart/tensor.hpp"

// Checkpoint file layout:
//   8 bytes   magic "HARTCKPT"
//   u32 LE    format version (1)
//   u64 LE    header length in bytes
//   header    UTF-8 JSON: {"model": {...}, "manifest": [{name, shape, dtype}]}
//   payload   raw little-endian float32 tensors, manifest order
// Round trips are bit-exact for float32 stores.
namespace hart {

inline constexpr char kCheckpointMagic[8] = {'H', 'A', 'R', 'T', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointData {
  nlohmann::json model;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

template <typename T>
void save_checkpoint(const std::string& path, const nlohmann::json& model_config,
                     const ParamStoreT<T>& params) {
  nlohmann::json manifest = nlohmann::json::array();
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    manifest.push_back({{"name", p.name},
                        {"shape", p.value.shape()},
                        {"dtype", "f32"},
                        {"trainable", p.trainable}});
  }
  nlohmann::json header = {{"model", model_config}, {"manifest", manifest}};
  const std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open checkpoint for writing: " + path);
  f.write(kCheckpointMagic, 8);
  const uint32_t ver = kCheckpointVersion;
  f.write(reinterpret_cast<const char*>(&ver), 4);
  const uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  std::vector<float> buf;
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& v = params[i].value;
    buf.resize(static_cast<size_t>(v.numel()));
    const T* src = v.data();
    for (int64_t j = 0; j < v.numel(); ++j) buf[static_cast<size_t>(j)] = static_cast<float>(src[j]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!f) throw DataError("short write on checkpoint: " + path);
}

inline CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw DataError("not a checkpoint file (bad magic): " + path);
  uint32_t ver = 0;
  f.read(reinterpret_cast<char*>(&ver), 4);
  if (ver != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(ver) + ": " + path);
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 8);
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw DataError("truncated checkpoint header: " + path);
  nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
  if (header.is_discarded()) throw DataError("corrupt checkpoint header JSON: " + path);

  CheckpointData out;
  out.model = header.value("model", nlohmann::json::object());
  for (const auto& e : header.at("manifest")) {
    const std::string name = e.at("name").get<std::string>();
    const Shape shape = e.at("shape").get<Shape>();
    std::vector<float> vals(static_cast<size_t>(shape_numel(shape)));
    f.read(reinterpret_cast<char*>(vals.data()),
           static_cast<std::streamsize>(vals.size() * sizeof(float)));
    if (!f) throw DataError("truncated checkpoint payload at tensor " + name + ": " + path);
    out.tensors.emplace_back(name, Tensor(shape, std::move(vals)));
  }
  return out;
}

/// Copy checkpoint tensors into a built model's parameters; every parameter
/// must be present with a matching shape.
template <typename T>
void load_into(ParamStoreT<T>& params, const CheckpointData& ckpt) {
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const Tensor* t = ckpt.find(p.name);
    if (!t) throw DataError("checkpoint is missing tensor: " + p.name);
    if (t->shape() != p.value.shape())
      throw DataError("checkpoint tensor " + p.name + " has shape " + shape_str(t->shape()) +
                      ", model expects " + shape_str(p.value.shape()));
    if constexpr (std::is_same_v<T, float>) {
      p.value = *t;
    } else {
      p.value = t->template cast<T>();
    }
    p.grad = TensorT<T>(p.value.shape());
  }
}

}  // namespace hart
