#include "doctest.h"

#include <cstdio>
#include <filesystem>

#include "hart/checkpoint.hpp"
#include "hart/eval/costing.hpp"
#include "hart/models/build.hpp"
#include "testutil.hpp"

using namespace hart;
using namespace hart::models;

namespace {
nlohmann::json tiny(const std::string& variant) {
  return resolve_model_config(variant, "tiny", {{"num_classes", 6}});
}
int64_t params_of(const std::string& variant, const std::string& preset) {
  auto m = build_model_f32(resolve_model_config(variant, preset, {{"num_classes", 6}}), 1);
  return eval::count_params(*m);
}
}  // namespace

TEST_CASE("count_params: linear 2->3 with bias is 9") {
  ParamStore ps;
  RngStream rng(41);
  nn::LinearT<float> lin;
  lin.build(ps, rng, "lin", 2, 3);
  CHECK(ps.count(true) == 9);
}

TEST_CASE("count_flops: linear N=1 2->3 with bias is 15 under MAC=2") {
  ParamStore ps;
  RngStream rng(42);
  nn::LinearT<float> lin;
  lin.build(ps, rng, "lin", 2, 3);
  CostReport r;
  lin.cost(r, "lin", 1);
  CHECK(r.total_flops() == 15);
}

TEST_CASE("tiny hart parameter total reproduces the reference within 10%") {
  // Independent hand count of the architecture at d=192, H=3, L=6, classes 6:
  //   stem 2*(16*3*96+96) + pos 8*192
  //   blocks 6*( 2*384 + 2*(3*(48*144+144) + 144*48+48)
  //             + (96*192+192) + 12 + (96*96+96)
  //             + (192*384+384) + (384*192+192) )
  //   head 384 + (192*192+192) + (192*6+6)
  const int64_t stem = 2 * (16 * 3 * 96 + 96) + 8 * 192;
  const int64_t msa = 3 * (48 * 144 + 144) + 144 * 48 + 48;
  const int64_t lite = (96 * 192 + 192) + 12 + (96 * 96 + 96);
  const int64_t ff = (192 * 384 + 384) + (384 * 192 + 192);
  const int64_t block = 2 * 384 + 2 * msa + lite + ff;
  const int64_t head = 384 + (192 * 192 + 192) + (192 * 6 + 6);
  const int64_t expected = stem + 6 * block + head;
  CHECK(expected == 1447566);

  auto m = build_model_f32(tiny("hart"), 1);
  CHECK(eval::count_params(*m) == expected);

  const double reference = 1445918.0;  // published total
  CHECK(std::fabs(expected - reference) / reference < 0.10);
}

TEST_CASE("vit tiny parameter total matches the published 3,783,238 exactly") {
  auto m = build_model_f32(tiny("vit"), 1);
  CHECK(eval::count_params(*m) == 3783238);
}

TEST_CASE("vit small and base match the published totals exactly") {
  CHECK(params_of("vit", "small") == 50107270);
  CHECK(params_of("vit", "base") == 369332998);
}

TEST_CASE("parameter orderings: one_msa < hart < vit at tiny/small/base") {
  for (const char* preset : {"tiny", "small", "base"}) {
    const int64_t one = params_of("hart_one_msa", preset);
    const int64_t hart = params_of("hart", preset);
    const int64_t vit = params_of("vit", preset);
    CHECK(one < hart);
    CHECK(hart < vit);
  }
}

TEST_CASE("small scaling: vit/hart parameter factor >= 3") {
  const double vit = static_cast<double>(params_of("vit", "small"));
  const double hart = static_cast<double>(params_of("hart", "small"));
  CHECK(vit / hart >= 3.0);
}

TEST_CASE("flops ordering: hart < vit at each preset; attention ratio exactly 0.5") {
  for (const char* preset : {"tiny", "small"}) {
    auto hart = build_model_f32(resolve_model_config("hart", preset, {{"num_classes", 6}}), 1);
    auto vit = build_model_f32(resolve_model_config("vit", preset, {{"num_classes", 6}}), 1);
    CostReport rh = eval::count_costs(*hart);
    CostReport rv = eval::count_costs(*vit);
    CHECK(rh.total_flops() < rv.total_flops());
  }

  // attention score/value MACs per block at equal (N, d), S=2
  auto hart = std::make_unique<TransformerModelT<float>>(HartConfig::from_json(tiny("hart")), 1);
  auto vit = std::make_unique<TransformerModelT<float>>(HartConfig::from_json(tiny("vit")), 1);
  CostReport rh, rv;
  hart->block_cost(rh, 0, 1, 8);
  vit->block_cost(rv, 0, 1, 8);
  CHECK(rh.total_attention_core() * 2 == rv.total_attention_core());
}

TEST_CASE("hart_one_msa flops equal hart flops (shared weights, same compute)") {
  auto one = build_model_f32(tiny("hart_one_msa"), 1);
  auto hart = build_model_f32(tiny("hart"), 1);
  CHECK(eval::count_costs(*one).total_flops() == eval::count_costs(*hart).total_flops());
}

TEST_CASE("ff flops scale linearly in the frame count") {
  auto at = [](int W) {
    auto m = build_model_f32(resolve_model_config("hart", "tiny", {{"num_classes", 6}, {"W", W}}), 1);
    CostReport r = eval::count_costs(*m);
    int64_t ff = 0;
    for (const auto& e : r.entries)
      if (e.name.find("/ff/") != std::string::npos) ff += e.flops;
    return ff;
  };
  CHECK(at(256) == 2 * at(128));
}

TEST_CASE("report totals equal per-layer sums and checkpoint manifest elements") {
  auto m = build_model_f32(resolve_model_config("mobilehart_xxs", "", {{"num_classes", 6}}), 1);
  CostReport r = eval::count_costs(*m, 4);
  int64_t params = 0, flops = 0;
  for (const auto& e : r.entries) {
    params += e.params;
    flops += e.flops;
  }
  CHECK(params == r.total_params());
  CHECK(flops == r.total_flops());

  // independent path: checkpoint manifest element counts
  const std::string path =
      (std::filesystem::temp_directory_path() / "hart_cost_test.ckpt").string();
  save_checkpoint(path, m->config_json(), m->params());
  CheckpointData data = load_checkpoint(path);
  int64_t manifest_elems = 0;
  for (const auto& [name, t] : data.tensors) manifest_elems += t.numel();
  CHECK(manifest_elems == r.total_params());
  std::remove(path.c_str());
}

TEST_CASE("composed model flops equal the sum of its per-layer reports (3-layer toy)") {
  auto m = build_model_f32(
      resolve_model_config("hart", "tiny", {{"num_classes", 3}, {"L", 3}, {"d", 16},
                                            {"H", 2}, {"W", 32}, {"K", 8}}),
      1);
  CostReport whole = eval::count_costs(*m);
  int64_t block_sum = 0, other = 0;
  for (const auto& e : whole.entries) {
    if (e.name.rfind("block", 0) == 0) block_sum += e.flops;
    else other += e.flops;
  }
  CHECK(whole.total_flops() == block_sum + other);

  auto tm = std::make_unique<TransformerModelT<float>>(
      HartConfig::from_json(resolve_model_config(
          "hart", "tiny", {{"num_classes", 3}, {"L", 3}, {"d", 16}, {"H", 2}, {"W", 32}, {"K", 8}})),
      1);
  CostReport blocks_only;
  for (int l = 0; l < 3; ++l) tm->block_cost(blocks_only, l, 1, 4);
  CHECK(blocks_only.total_flops() == block_sum);
}

TEST_CASE("cost json report carries the convention and stable fields") {
  auto m = build_model_f32(tiny("hart"), 1);
  auto j = eval::count_costs(*m).to_json();
  CHECK(j.contains("convention"));
  CHECK(j["convention"]["mac"] == 2);
  CHECK(j["total_params"] == 1447566);
  CHECK(j["layers"].is_array());
  CHECK(j["layers"].size() > 10);
}
