#include "doctest.h"

#include <vector>

#include "hart/kernels.hpp"
#include "hart/kernels_ref.hpp"
#include "hart/rng.hpp"
#include "hart/tensor.hpp"
#include "hart/threading.hpp"
#include "testutil.hpp"

using namespace hart;

namespace {

float max_abs_diff(const float* a, const float* b, int64_t n) {
  float m = 0;
  for (int64_t i = 0; i < n; ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("matmul matches reference for all transpose modes") {
  RngStream rng(11);
  const int M = 13, K = 17, N = 9;
  auto A = testutil::random_tensor<float>({M, K}, rng);
  auto At = testutil::random_tensor<float>({K, M}, rng);
  auto B = testutil::random_tensor<float>({K, N}, rng);
  auto Bt = testutil::random_tensor<float>({N, K}, rng);
  Tensor C({M, N}), Cr({M, N});

  kernels::matmul(A.data(), B.data(), C.mutable_data(), M, K, N, false, false);
  kernels::ref::matmul(A.data(), B.data(), Cr.mutable_data(), M, K, N, false, false);
  CHECK(max_abs_diff(C.data(), Cr.data(), M * N) < 1e-5f);

  kernels::matmul(A.data(), Bt.data(), C.mutable_data(), M, K, N, false, true);
  kernels::ref::matmul(A.data(), Bt.data(), Cr.mutable_data(), M, K, N, false, true);
  CHECK(max_abs_diff(C.data(), Cr.data(), M * N) < 1e-5f);

  kernels::matmul(At.data(), B.data(), C.mutable_data(), M, K, N, true, false);
  kernels::ref::matmul(At.data(), B.data(), Cr.mutable_data(), M, K, N, true, false);
  CHECK(max_abs_diff(C.data(), Cr.data(), M * N) < 1e-5f);
}

TEST_CASE("parallel kernels are bit-identical across thread counts") {
  RngStream rng(12);
  const int M = 64, K = 96, N = 80;
  auto A = testutil::random_tensor<float>({M, K}, rng);
  auto B = testutil::random_tensor<float>({K, N}, rng);
  Tensor C1({M, N}), C2({M, N});
  set_threads(1);
  kernels::matmul(A.data(), B.data(), C1.mutable_data(), M, K, N, false, false);
  set_threads(2);
  kernels::matmul(A.data(), B.data(), C2.mutable_data(), M, K, N, false, false);
  set_threads(0);
  for (int64_t i = 0; i < M * N; ++i) CHECK(C1.data()[i] == C2.data()[i]);
}

TEST_CASE("bmm matches reference") {
  RngStream rng(13);
  const int G = 5, M = 7, K = 6, N = 8;
  auto A = testutil::random_tensor<float>({G, M, K}, rng);
  auto B = testutil::random_tensor<float>({G, K, N}, rng);
  Tensor C({G, M, N}), Cr({G, M, N});
  kernels::bmm(A.data(), B.data(), C.mutable_data(), G, M, K, N, false, false);
  kernels::ref::bmm(A.data(), B.data(), Cr.mutable_data(), G, M, K, N, false, false);
  CHECK(max_abs_diff(C.data(), Cr.data(), G * M * N) < 1e-5f);
}

TEST_CASE("conv1d matches im2col-style reference, with and without groups") {
  RngStream rng(14);
  for (int groups : {1, 2, 6}) {
    const int B = 2, T = 20, Cin = 6, K = 3, Cout = 12, stride = 2, padL = 1;
    const int To = (T + stride - 1) / stride;
    auto x = testutil::random_tensor<float>({B, T, Cin}, rng);
    auto w = testutil::random_tensor<float>({K, Cin / groups, Cout}, rng);
    auto bias = testutil::random_tensor<float>({Cout}, rng);
    Tensor y({B, To, Cout}), yr({B, To, Cout});
    kernels::conv1d_forward(x.data(), w.data(), bias.data(), y.mutable_data(), B, T, Cin,
                            K, Cout, stride, padL, To, groups);
    kernels::ref::conv1d(x.data(), w.data(), bias.data(), yr.mutable_data(), B, T, Cin, K,
                         Cout, stride, padL, To, groups);
    CHECK(max_abs_diff(y.data(), yr.data(), y.numel()) < 1e-5f);
  }
}

TEST_CASE("softmax kernel matches reference and rows sum to one") {
  RngStream rng(15);
  const int rows = 11, n = 7;
  auto x = testutil::random_tensor<float>({rows, n}, rng, -5, 5);
  Tensor y({rows, n}), yr({rows, n});
  kernels::softmax(x.data(), y.mutable_data(), rows, n, 1);
  kernels::ref::softmax_rows(x.data(), yr.mutable_data(), rows, n);
  CHECK(max_abs_diff(y.data(), yr.data(), rows * n) < 1e-6f);
  for (int r = 0; r < rows; ++r) {
    float s = 0;
    for (int c = 0; c < n; ++c) {
      CHECK(y.data()[r * n + c] > 0.0f);
      s += y.data()[r * n + c];
    }
    CHECK(s == doctest::Approx(1.0f).epsilon(1e-6));
  }
}

TEST_CASE("layernorm kernel matches reference") {
  RngStream rng(16);
  const int rows = 9, d = 24;
  auto x = testutil::random_tensor<float>({rows, d}, rng);
  auto gamma = testutil::random_tensor<float>({d}, rng, 0.5, 1.5);
  auto beta = testutil::random_tensor<float>({d}, rng);
  Tensor y({rows, d}), yr({rows, d}), mean({rows}), invstd({rows});
  kernels::layernorm_forward(x.data(), gamma.data(), beta.data(), y.mutable_data(),
                             mean.mutable_data(), invstd.mutable_data(), rows, d, 1e-6f);
  kernels::ref::layernorm(x.data(), gamma.data(), beta.data(), yr.mutable_data(), rows, d,
                          1e-6f);
  CHECK(max_abs_diff(y.data(), yr.data(), rows * d) < 1e-5f);
}
