#include "doctest.h"

#include <string>

#include "hart/ops.hpp"
#include "testutil.hpp"

// Finite-difference checks for every differentiable op, in float and in the
// double shadow instantiation. Tolerances per precision live in testutil.

using namespace hart;
using testutil::check_op_gradients;
using testutil::random_tensor;

namespace {

template <typename T>
void check_all_ops() {
  RngStream rng(101);
  std::string why;

  auto rt = [&](Shape s) { return random_tensor<T>(std::move(s), rng); };

  SUBCASE("add broadcast") {
    CHECK_MESSAGE(check_op_gradients<T>(
                      {rt({3, 4, 5}), rt({5})},
                      [](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                        return ops::add(c, v[0], v[1]);
                      },
                      1, &why),
                  why);
  }
  SUBCASE("mul") {
    CHECK_MESSAGE(check_op_gradients<T>(
                      {rt({4, 6}), rt({4, 6})},
                      [](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                        return ops::mul(c, v[0], v[1]);
                      },
                      2, &why),
                  why);
  }
  SUBCASE("matmul") {
    CHECK_MESSAGE(check_op_gradients<T>(
                      {rt({2, 3, 4}), rt({4, 5})},
                      [](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                        return ops::matmul(c, v[0], v[1]);
                      },
                      3, &why),
                  why);
  }
  SUBCASE("bmm and bmm transB") {
    CHECK_MESSAGE(check_op_gradients<T>(
                      {rt({3, 2, 4}), rt({3, 4, 5})},
                      [](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                        return ops::bmm(c, v[0], v[1], false);
                      },
                      4, &why),
                  why);
    CHECK_MESSAGE(check_op_gradients<T>(
                      {rt({3, 2, 4}), rt({3, 5, 4})},
                      [](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                        return ops::bmm(c, v[0], v[1], true);
                      },
                      5, &why),
                  why);
  }
  SUBCASE("conv1d valid stride2 groups2 with bias") {
    CHECK_MESSAGE(check_op_gradients<T>(
                      {rt({2, 9, 4}), rt({3, 2, 6}), rt({6})},
                      [](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                        return ops::conv1d(c, v[0], v[1], v[2], 2, 2, ops::Pad::kValid);
                      },
                      6, &why),
                  why);
  }
  SUBCASE("conv1d same padding") {
    CHECK_MESSAGE(check_op_gradients<T>(
                      {rt({2, 8, 3}), rt({3, 3, 5}), rt({5})},
                      [](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                        return ops::conv1d(c, v[0], v[1], v[2], 1, 1, ops::Pad::kSame);
                      },
                      7, &why),
                  why);
  }
  SUBCASE("softmax") {
    CHECK_MESSAGE(check_op_gradients<T>(
                      {rt({4, 6})},
                      [](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                        // weight the outputs so the gradient is not identically 0
                        auto s = ops::softmax(c, v[0]);
                        VarT<T> w{TensorT<T>(Shape{4, 6}), -1};
                        T* p = w.v.mutable_data();
                        for (int i = 0; i < 24; ++i) p[i] = T(0.1) * T(i % 7) - T(0.2);
                        return ops::mul(c, s, w);
                      },
                      8, &why),
                  why);
  }
  SUBCASE("layer_norm") {
    CHECK_MESSAGE(check_op_gradients<T>(
                      {rt({5, 8}), rt({8}), rt({8})},
                      [](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                        auto y = ops::layer_norm(c, v[0], v[1], v[2], T(1e-6));
                        VarT<T> w{TensorT<T>(Shape{5, 8}), -1};
                        T* p = w.v.mutable_data();
                        for (int i = 0; i < 40; ++i) p[i] = T(0.05) * T((i * 13) % 11) - T(0.2);
                        return ops::mul(c, y, w);
                      },
                      9, &why),
                  why);
  }
  SUBCASE("batch_norm train") {
    CHECK_MESSAGE(check_op_gradients<T>(
                      {rt({7, 3}), rt({3}), rt({3})},
                      [](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                        c.mode = Mode::kTrain;
                        TensorT<T> rm(Shape{3}), rv = TensorT<T>::full(Shape{3}, T(1));
                        int64_t seen = 0;
                        auto y = ops::batch_norm(c, v[0], v[1], v[2], rm, rv, seen, T(0.99),
                                                 T(1e-3));
                        VarT<T> w{TensorT<T>(Shape{7, 3}), -1};
                        T* p = w.v.mutable_data();
                        for (int i = 0; i < 21; ++i) p[i] = T(0.07) * T((i * 5) % 9) - T(0.2);
                        return ops::mul(c, y, w);
                      },
                      10, &why),
                  why);
  }
  SUBCASE("batch_norm eval") {
    CHECK_MESSAGE(check_op_gradients<T>(
                      {rt({6, 3}), rt({3}), rt({3})},
                      [](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                        TensorT<T> rm(Shape{3}), rv = TensorT<T>::full(Shape{3}, T(1.5));
                        int64_t seen = 3;
                        return ops::batch_norm(c, v[0], v[1], v[2], rm, rv, seen, T(0.99),
                                               T(1e-3));
                      },
                      11, &why),
                  why);
  }
  SUBCASE("activations") {
    for (auto kind : {ops::Act::kSwish, ops::Act::kGelu, ops::Act::kSigmoid}) {
      CHECK_MESSAGE(check_op_gradients<T>(
                        {rt({3, 7})},
                        [kind](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                          return ops::activation(c, v[0], kind);
                        },
                        12, &why),
                    why);
    }
  }
  SUBCASE("gap") {
    CHECK_MESSAGE(check_op_gradients<T>(
                      {rt({3, 4, 5})},
                      [](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                        return ops::global_average_pool(c, v[0]);
                      },
                      13, &why),
                  why);
  }
  SUBCASE("slice and concat") {
    CHECK_MESSAGE(check_op_gradients<T>(
                      {rt({2, 3, 6})},
                      [](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                        auto a = ops::slice_last(c, v[0], 1, 3);
                        auto b = ops::slice_last(c, v[0], 3, 6);
                        return ops::concat_last(c, std::vector<VarT<T>>{b, a});
                      },
                      14, &why),
                  why);
  }
  SUBCASE("rows ops (cls path)") {
    CHECK_MESSAGE(check_op_gradients<T>(
                      {rt({4}), rt({2, 3, 4})},
                      [](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                        auto cls = ops::tile_rows(c, v[0], 2);
                        auto seq = ops::concat_rows(c, cls, v[1]);
                        return ops::slice_rows(c, seq, 0, 2);
                      },
                      15, &why),
                  why);
  }
  SUBCASE("heads and frames movement") {
    CHECK_MESSAGE(check_op_gradients<T>(
                      {rt({2, 3, 8})},
                      [](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                        auto h = ops::split_heads(c, v[0], 4);
                        return ops::merge_heads(c, ops::scale(c, h, T(1.5)), 4);
                      },
                      16, &why),
                  why);
    CHECK_MESSAGE(check_op_gradients<T>(
                      {rt({2, 6, 3})},
                      [](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                        auto u = ops::unfold_frames(c, v[0], 2);
                        return ops::fold_frames(c, ops::scale(c, u, T(0.7)), 2);
                      },
                      17, &why),
                  why);
  }
  SUBCASE("shared depthwise softmax conv") {
    CHECK_MESSAGE(check_op_gradients<T>(
                      {rt({2, 5, 4}), rt({2, 3})},
                      [](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                        auto w = ops::softmax(c, v[1]);
                        return ops::shared_dconv(c, v[0], w);
                      },
                      18, &why),
                  why);
  }
  SUBCASE("dropout and drop_path: mask held fixed across FD evals") {
    // With a fixed mask the op is linear; gradcheck re-derives the same
    // stream because the ctx call index restarts per evaluation.
    CHECK_MESSAGE(check_op_gradients<T>(
                      {rt({6, 4})},
                      [](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                        c.mode = Mode::kTrain;
                        static RngStream r(99);
                        r = RngStream(99);
                        c.rng = &r;
                        return ops::dropout(c, v[0], 0.3);
                      },
                      19, &why),
                  why);
    CHECK_MESSAGE(check_op_gradients<T>(
                      {rt({6, 4})},
                      [](CtxT<T>& c, const std::vector<VarT<T>>& v) {
                        c.mode = Mode::kTrain;
                        static RngStream r(98);
                        r = RngStream(98);
                        c.rng = &r;
                        return ops::drop_path(c, v[0], 0.5);
                      },
                      20, &why),
                  why);
  }
}

}  // namespace

TEST_CASE("gradients: float ops match finite differences (<=1e-3)") {
  check_all_ops<float>();
}

TEST_CASE("gradients: double shadow ops match finite differences (<=1e-6)") {
  check_all_ops<double>();
}

TEST_CASE("gradients: random small composite net") {
  RngStream rng(202);
  std::string why;
  // two-layer net with layer norm and swish between matmuls
  CHECK_MESSAGE(check_op_gradients<double>(
                    {random_tensor<double>({4, 6}, rng), random_tensor<double>({6, 5}, rng),
                     random_tensor<double>({5}, rng), random_tensor<double>({5, 3}, rng),
                     random_tensor<double>({5}, rng), random_tensor<double>({5}, rng)},
                    [](CtxT<double>& c, const std::vector<VarT<double>>& v) {
                      auto h = ops::add(c, ops::matmul(c, v[0], v[1]), v[2]);
                      h = ops::layer_norm(c, h, v[4], v[5], 1e-6);
                      h = ops::activation(c, h, ops::Act::kSwish);
                      return ops::matmul(c, h, v[3]);
                    },
                    21, &why),
                why);
}
