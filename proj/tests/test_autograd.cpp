#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tsn/gradcheck.hpp"
#include "tsn/ops.hpp"

using namespace tsn;

TEST_CASE("grad_check known derivatives: relu at 1, sigmoid at 0") {
  DifferentiableOp<double> r{"relu", [](Tape<double>& t, const std::vector<int>& in) {
                               return relu(t, in[0]);
                             }};
  // analytic grad at x=1 is 1; the checker returns the FD disagreement
  CHECK(grad_check(r, {Tensor64({1, 1}, {1.0})}, 1e-5) < 1e-6);

  Tape<double> tp;
  int x = tp.leaf(Tensor64({1, 1}, {0.0}));
  int y = sigmoid(tp, x);
  tp.backward(sum_all(tp, y));
  CHECK(tp.grad(x).data[0] == doctest::Approx(0.25).epsilon(1e-12));

  DifferentiableOp<double> s{"sigmoid", [](Tape<double>& t, const std::vector<int>& in) {
                               return sigmoid(t, in[0]);
                             }};
  CHECK(grad_check(s, {Tensor64({1, 1}, {0.0})}, 1e-5) < 1e-6);
}

TEST_CASE("grad_check passes for every core primitive") {
  for (auto& c : core_grad_cases()) {
    const double err = grad_check(c.op, c.inputs, 1e-5);
    INFO(c.name);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("backward output count and shapes match forward inputs") {
  // matmul has two inputs; after backward both carry gradients of the
  // input shapes
  Tape<double> tp;
  Tensor64 a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor64 b({3, 2}, {1, 0, 0, 1, 1, 1});
  int ia = tp.leaf(a), ib = tp.leaf(b);
  int y = matmul(tp, ia, ib);
  tp.backward(sum_all(tp, y));
  CHECK(tp.grad(ia).shape == a.shape);
  CHECK(tp.grad(ib).shape == b.shape);
}

TEST_CASE("tape accumulates gradients over shared subexpressions") {
  // y = x*x + x  =>  dy/dx = 2x + 1
  Tape<double> tp;
  int x = tp.leaf(Tensor64({1, 1}, {3.0}));
  int y = add(tp, mul(tp, x, x), x);
  tp.backward(sum_all(tp, y));
  CHECK(tp.grad(x).data[0] == doctest::Approx(7.0));
}

TEST_CASE("unused subgraphs keep exactly-zero gradients") {
  Tape<double> tp;
  int x = tp.leaf(Tensor64({1, 1}, {2.0}));
  int unused = tp.leaf(Tensor64({1, 1}, {5.0}));
  int dead = mul(tp, unused, unused);
  (void)dead;
  tp.backward(sum_all(tp, mul(tp, x, x)));
  CHECK_FALSE(tp.has_grad(unused));
  CHECK(tp.grad(unused).data[0] == 0.0);
  CHECK(tp.grad(x).data[0] == doctest::Approx(4.0));
}

TEST_CASE("grad_check rejects eps outside the allowed window") {
  DifferentiableOp<double> s{"scale", [](Tape<double>& t, const std::vector<int>& in) {
                               return scale(t, in[0], 2.0);
                             }};
  CHECK_THROWS(grad_check(s, {Tensor64({1, 1}, {1.0})}, 1e-8));
  CHECK_THROWS(grad_check(s, {Tensor64({1, 1}, {1.0})}, 1e-3));
}
