#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracle.hpp"
#include "tsn/ops.hpp"
#include "tsn/rng.hpp"

using namespace tsn;

namespace {

Tensor64 randn64(Rng& rng, std::vector<int> shape) {
  Tensor64 t(std::move(shape));
  for (auto& v : t.data) v = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("matmul identity and zero cases") {
  Tensor64 i2 = Tensor64::identity(2);
  Tensor64 b({2, 2}, {3, 4, 5, 6});
  Tensor64 c = matmul_raw(i2, b);
  CHECK(c.data == std::vector<double>{3, 4, 5, 6});

  Tensor64 a({1, 2}, {1, 2});
  Tensor64 z({2, 1}, {0, 0});
  CHECK(matmul_raw(a, z).data[0] == 0.0);
}

TEST_CASE("matmul matches naive triple-loop oracle") {
  Rng rng(11);
  Tensor64 a = randn64(rng, {4, 3});
  Tensor64 b = randn64(rng, {3, 5});
  CHECK(oracle::max_abs_diff(matmul_raw(a, b), oracle::matmul_naive(a, b)) < 1e-12);
}

TEST_CASE("matmul rejects mismatched inner extents") {
  Tensor64 a({2, 3});
  Tensor64 b({2, 2});
  CHECK_THROWS_AS(matmul_raw(a, b), DimensionError);
}

TEST_CASE("softmax_rows equal logits and stability") {
  Tensor64 x({1, 3}, {0, 0, 0});
  Tensor64 y = softmax_rows_raw(x);
  for (double v : y.data) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Tensor64 big({1, 2}, {1000, 0});
  Tensor64 yb = softmax_rows_raw(big);
  CHECK(std::isfinite(yb.data[0]));
  CHECK(yb.data[0] == doctest::Approx(1.0));
  CHECK(yb.data[1] < 1e-300);
}

TEST_CASE("softmax_rows matches direct exp/sum oracle") {
  Rng rng(12);
  Tensor64 x = randn64(rng, {3, 4});
  CHECK(oracle::max_abs_diff(softmax_rows_raw(x), oracle::softmax_direct(x)) < 1e-12);
}

TEST_CASE("softmax_rows row sums and shift invariance") {
  Rng rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor64 x = randn64(rng, {5, 7});
    Tensor64 y = softmax_rows_raw(x);
    for (int i = 0; i < 5; ++i) {
      double s = 0.0;
      for (int j = 0; j < 7; ++j) {
        CHECK(y(i, j) >= 0.0);
        s += y(i, j);
      }
      CHECK(std::fabs(s - 1.0) < 1e-12);
    }
    Tensor64 shifted = x;
    for (int i = 0; i < 5; ++i) {
      const double c = rng.uniform(-50.0, 50.0);
      for (int j = 0; j < 7; ++j) shifted(i, j) += c;
    }
    CHECK(oracle::max_abs_diff(softmax_rows_raw(shifted), y) < 1e-12);
  }
}

TEST_CASE("pairwise_sqdist exact zeros and 3-4-5 triangle") {
  Rng rng(14);
  Tensor64 q = randn64(rng, {3, 2});
  Tensor64 d = pairwise_sqdist_raw(q, q);
  for (int i = 0; i < 3; ++i) CHECK(d(i, i) == 0.0);

  Tensor64 p({1, 2}, {0, 0});
  Tensor64 k({1, 2}, {3, 4});
  CHECK(pairwise_sqdist_raw(p, k).data[0] == 25.0);
}

TEST_CASE("pairwise_sqdist matches expansion-identity oracle and is symmetric") {
  Rng rng(15);
  Tensor64 q = randn64(rng, {4, 3});
  Tensor64 k = randn64(rng, {5, 3});
  Tensor64 d = pairwise_sqdist_raw(q, k);
  CHECK(oracle::max_abs_diff(d, oracle::sqdist_expansion(q, k)) < 1e-10);

  Tensor64 dt = pairwise_sqdist_raw(k, q);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j) CHECK(d(i, j) == dt(j, i));
}

TEST_CASE("linear identity, hand sum, and matmul oracle") {
  Tape<double> tp;
  int x = tp.leaf(Tensor64({2, 2}, {1, 2, 3, 4}));
  int w = tp.leaf(Tensor64::identity(2));
  int b = tp.leaf(Tensor64({2}, {0, 0}));
  CHECK(tp.val(linear(tp, x, w, b)).data == std::vector<double>{1, 2, 3, 4});

  int x2 = tp.leaf(Tensor64({1, 2}, {1, 1}));
  int w2 = tp.leaf(Tensor64({2, 1}, {1, 1}));
  int b2 = tp.leaf(Tensor64({1}, {1}));
  CHECK(tp.val(linear(tp, x2, w2, b2)).data[0] == 3.0);

  Rng rng(16);
  Tensor64 xr = randn64(rng, {3, 4});
  Tensor64 wr = randn64(rng, {4, 2});
  Tensor64 br = randn64(rng, {2});
  int y = linear(tp, tp.leaf(xr), tp.leaf(wr), tp.leaf(br));
  Tensor64 want = oracle::matmul_naive(xr, wr);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) want(i, j) += br.data[static_cast<size_t>(j)];
  CHECK(oracle::max_abs_diff(tp.val(y), want) < 1e-12);
}

TEST_CASE("conv2d 1x1 kernel equals per-pixel linear") {
  Rng rng(17);
  Tensor64 x = randn64(rng, {4, 4, 3});
  Tensor64 k = randn64(rng, {1, 1, 3, 2});
  Tensor64 b = randn64(rng, {2});
  Tensor64 y = conv2d_raw(x, k, b, 1, 0);
  Tensor64 xf = x.reshaped({16, 3});
  Tensor64 kf = k.reshaped({3, 2});
  Tensor64 want = oracle::matmul_naive(xf, kf);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 2; ++j) want(i, j) += b.data[static_cast<size_t>(j)];
  CHECK(oracle::max_abs_diff(y.reshaped({16, 2}), want) < 1e-12);
}

TEST_CASE("conv2d box sum on constant input") {
  const int cin = 2;
  Tensor64 x = Tensor64::full({5, 5, cin}, 1.0);
  Tensor64 k = Tensor64::full({3, 3, cin, 1}, 1.0);
  Tensor64 b({1}, {0});
  Tensor64 y = conv2d_raw(x, k, b, 1, 1);
  CHECK(y(2, 2, 0) == doctest::Approx(9.0 * cin));
  CHECK(y(0, 0, 0) == doctest::Approx(4.0 * cin));  // corner sees a 2x2 window
}

TEST_CASE("conv2d matches sliding-window oracle") {
  Rng rng(18);
  Tensor64 x = randn64(rng, {5, 5, 2});
  Tensor64 k = randn64(rng, {3, 3, 2, 3});
  Tensor64 b = randn64(rng, {3});
  for (int stride : {1, 2}) {
    Tensor64 got = conv2d_raw(x, k, b, stride, 1);
    Tensor64 want = oracle::conv2d_sliding(x, k, b, stride, 1);
    CHECK(oracle::max_abs_diff(got, want) < 1e-10);
  }
}

TEST_CASE("conv2d rejects non-integral output extents") {
  Tensor64 x({6, 6, 1});
  Tensor64 k({3, 3, 1, 1});
  Tensor64 b({1});
  CHECK_THROWS_AS(conv2d_raw(x, k, b, 2, 0), DimensionError);
  Tensor64 keven({2, 2, 1, 1});
  CHECK_THROWS_AS(conv2d_raw(x, keven, b, 1, 0), DimensionError);
}

TEST_CASE("elementwise relu / sigmoid / concat") {
  Tape<double> tp;
  int x = tp.leaf(Tensor64({1, 3}, {-1, 0, 2}));
  CHECK(tp.val(relu(tp, x)).data == std::vector<double>{0, 0, 2});

  int z = tp.leaf(Tensor64({1, 1}, {0}));
  CHECK(tp.val(sigmoid(tp, z)).data[0] == 0.5);

  Rng rng(19);
  Tensor64 a = randn64(rng, {2, 2, 2});
  Tensor64 b = randn64(rng, {2, 2, 3});
  int cid = concat_channels(tp, tp.leaf(a), tp.leaf(b));
  const Tensor64& c = tp.val(cid);
  CHECK(c.shape == std::vector<int>{2, 2, 5});
  CHECK(c(1, 1, 0) == a(1, 1, 0));
  CHECK(c(1, 1, 2) == b(1, 1, 0));
  CHECK(c(0, 1, 4) == b(0, 1, 2));
}

TEST_CASE("bilinear upsample constant and 1x1 cases") {
  Tensor64 c = Tensor64::full({3, 3, 2}, 3.0);
  Tensor64 y = bilinear_upsample_raw(c, 2);
  CHECK(y.shape == std::vector<int>{6, 6, 2});
  for (double v : y.data) CHECK(v == doctest::Approx(3.0).epsilon(1e-12));

  Tensor64 one = Tensor64::full({1, 1, 1}, 7.5);
  Tensor64 y1 = bilinear_upsample_raw(one, 2);
  for (double v : y1.data) CHECK(v == 7.5);
}

TEST_CASE("bilinear upsample 2x2 ramp matches closed form") {
  Tensor64 x({2, 2, 1}, {0, 1, 2, 3});
  Tensor64 y = bilinear_upsample_raw(x, 2);
  for (int oy = 0; oy < 4; ++oy)
    for (int ox = 0; ox < 4; ++ox)
      CHECK(y(oy, ox, 0) == doctest::Approx(oracle::bilinear_at(x, oy, ox, 2, 0)).epsilon(1e-12));
}

TEST_CASE("ops are deterministic within a build") {
  Rng rng(20);
  Tensor64 a = randn64(rng, {6, 5});
  Tensor64 b = randn64(rng, {5, 4});
  Tensor64 c1 = matmul_raw(a, b);
  Tensor64 c2 = matmul_raw(a, b);
  CHECK(c1.data == c2.data);
  Tensor64 s1 = softmax_rows_raw(a);
  Tensor64 s2 = softmax_rows_raw(a);
  CHECK(s1.data == s2.data);
}

TEST_CASE("finite forward outputs on finite inputs") {
  Rng rng(21);
  Tensor64 x = randn64(rng, {4, 4, 2});
  Tensor64 k = randn64(rng, {3, 3, 2, 2});
  Tensor64 b = randn64(rng, {2});
  for (double v : conv2d_raw(x, k, b, 1, 1).data) CHECK(std::isfinite(v));
  for (double v : softmax_rows_raw(x.reshaped({8, 4})).data) CHECK(std::isfinite(v));
}
