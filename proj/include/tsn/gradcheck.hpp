#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tsn/ops.hpp"
#include "tsn/rng.hpp"
#include "tsn/tape.hpp"

namespace tsn {

// An op as seen by the gradient checker: a pure graph builder over input ids.
// Backward comes from the tape, so checking one of these checks the same
// closures the model uses.
template <typename T>
struct DifferentiableOp {
  std::string name;
  std::function<int(Tape<T>&, const std::vector<int>&)> apply;
};

namespace detail {

inline double rel_err(double a, double n) {
  const double denom = std::max({std::fabs(a), std::fabs(n), 1.0});
  return std::fabs(a - n) / denom;
}

inline double project(const DifferentiableOp<double>& op, const std::vector<Tensor64>& inputs,
                      const Tensor64& r) {
  Tape<double> tp;
  std::vector<int> ids;
  ids.reserve(inputs.size());
  for (const auto& in : inputs) ids.push_back(tp.leaf(in));
  const int out = op.apply(tp, ids);
  const Tensor64& y = tp.val(out);
  if (y.numel() != r.numel()) throw DimensionError("grad_check: projection size mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < y.data.size(); ++i) acc += y.data[i] * r.data[i];
  return acc;
}

}  // namespace detail

// Max relative error between the analytic gradient of a random scalar
// projection of op(inputs) and central finite differences. float64 only.
inline double grad_check(const DifferentiableOp<double>& op, std::vector<Tensor64> inputs,
                         double eps = 1e-5, uint64_t seed = 7) {
  if (eps < 1e-7 || eps > 1e-4) throw Error("grad_check: eps outside [1e-7, 1e-4]");

  Tape<double> tp;
  std::vector<int> ids;
  for (const auto& in : inputs) ids.push_back(tp.leaf(in));
  const int out = op.apply(tp, ids);

  Rng rng(seed ^ hash_str(op.name.c_str()));
  Tensor64 r(tp.val(out).shape);
  for (auto& v : r.data) v = rng.uniform(-1.0, 1.0);

  const int rid = tp.leaf(r);
  const int j = sum_all(tp, mul(tp, out, rid));
  tp.backward(j);

  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Tensor64& ga = tp.grad(ids[i]);
    for (size_t e = 0; e < inputs[i].data.size(); ++e) {
      const double keep = inputs[i].data[e];
      inputs[i].data[e] = keep + eps;
      const double jp = detail::project(op, inputs, r);
      inputs[i].data[e] = keep - eps;
      const double jm = detail::project(op, inputs, r);
      inputs[i].data[e] = keep;
      const double gn = (jp - jm) / (2.0 * eps);
      worst = std::max(worst, detail::rel_err(ga.data[e], gn));
    }
  }
  return worst;
}

struct GradCase {
  std::string name;
  DifferentiableOp<double> op;
  std::vector<Tensor64> inputs;
};

namespace detail {

inline Tensor64 randn(Rng& rng, std::vector<int> shape, double scale = 1.0) {
  Tensor64 t(std::move(shape));
  for (auto& v : t.data) v = scale * rng.normal();
  return t;
}

// values bounded away from zero, for kinked ops like relu
inline Tensor64 rand_away_from_zero(Rng& rng, std::vector<int> shape) {
  Tensor64 t(std::move(shape));
  for (auto& v : t.data) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 1.5);
  return t;
}

}  // namespace detail

// Every differentiable primitive with a representative small float64 input.
inline std::vector<GradCase> core_grad_cases(uint64_t seed = 42) {
  using detail::randn;
  Rng rng(seed);
  std::vector<GradCase> cases;
  auto op1 = [](const char* n, auto fn) {
    return DifferentiableOp<double>{n, [fn](Tape<double>& t, const std::vector<int>& in) {
                                      return fn(t, in[0]);
                                    }};
  };
  auto op2 = [](const char* n, auto fn) {
    return DifferentiableOp<double>{n, [fn](Tape<double>& t, const std::vector<int>& in) {
                                      return fn(t, in[0], in[1]);
                                    }};
  };

  cases.push_back({"matmul", op2("matmul", [](auto& t, int a, int b) { return matmul(t, a, b); }),
                   {randn(rng, {4, 3}), randn(rng, {3, 5})}});
  cases.push_back({"transpose", op1("transpose", [](auto& t, int a) { return transpose(t, a); }),
                   {randn(rng, {3, 4})}});
  cases.push_back(
      {"softmax_rows", op1("softmax_rows", [](auto& t, int a) { return softmax_rows(t, a); }),
       {randn(rng, {3, 5})}});
  cases.push_back({"pairwise_sqdist",
                   op2("pairwise_sqdist",
                       [](auto& t, int a, int b) { return pairwise_sqdist(t, a, b); }),
                   {randn(rng, {4, 3}), randn(rng, {5, 3})}});
  cases.push_back({"linear",
                   {"linear",
                    [](Tape<double>& t, const std::vector<int>& in) {
                      return linear(t, in[0], in[1], in[2]);
                    }},
                   {randn(rng, {3, 4}), randn(rng, {4, 2}), randn(rng, {2})}});
  cases.push_back({"conv2d_s1",
                   {"conv2d_s1",
                    [](Tape<double>& t, const std::vector<int>& in) {
                      return conv2d(t, in[0], in[1], in[2], 1, 1);
                    }},
                   {randn(rng, {5, 5, 2}), randn(rng, {3, 3, 2, 3}, 0.5), randn(rng, {3})}});
  cases.push_back({"conv2d_s2",
                   {"conv2d_s2",
                    [](Tape<double>& t, const std::vector<int>& in) {
                      return conv2d(t, in[0], in[1], in[2], 2, 1);
                    }},
                   {randn(rng, {5, 5, 2}), randn(rng, {3, 3, 2, 3}, 0.5), randn(rng, {3})}});
  cases.push_back({"relu", op1("relu", [](auto& t, int a) { return relu(t, a); }),
                   {detail::rand_away_from_zero(rng, {3, 4})}});
  cases.push_back({"sigmoid", op1("sigmoid", [](auto& t, int a) { return sigmoid(t, a); }),
                   {randn(rng, {3, 4})}});
  cases.push_back({"add", op2("add", [](auto& t, int a, int b) { return add(t, a, b); }),
                   {randn(rng, {3, 4}), randn(rng, {3, 4})}});
  cases.push_back({"sub", op2("sub", [](auto& t, int a, int b) { return sub(t, a, b); }),
                   {randn(rng, {3, 4}), randn(rng, {3, 4})}});
  cases.push_back({"mul", op2("mul", [](auto& t, int a, int b) { return mul(t, a, b); }),
                   {randn(rng, {3, 4}), randn(rng, {3, 4})}});
  cases.push_back({"scale", op1("scale", [](auto& t, int a) { return scale(t, a, -2.5); }),
                   {randn(rng, {3, 4})}});
  cases.push_back(
      {"affine_const", op1("affine_const", [](auto& t, int a) { return affine_const(t, a, 0.5, -1.0); }),
       {randn(rng, {3, 4})}});
  cases.push_back({"concat_channels",
                   op2("concat_channels",
                       [](auto& t, int a, int b) { return concat_channels(t, a, b); }),
                   {randn(rng, {4, 4, 2}), randn(rng, {4, 4, 3})}});
  cases.push_back({"bilinear_upsample",
                   op1("bilinear_upsample",
                       [](auto& t, int a) { return bilinear_upsample(t, a, 2); }),
                   {randn(rng, {3, 3, 2})}});
  cases.push_back({"avgpool2x2", op1("avgpool2x2", [](auto& t, int a) { return avgpool2x2(t, a); }),
                   {randn(rng, {4, 4, 2})}});
  cases.push_back({"reshape", op1("reshape", [](auto& t, int a) { return reshape(t, a, {6, 2}); }),
                   {randn(rng, {3, 4})}});
  cases.push_back(
      {"slice_cols", op1("slice_cols", [](auto& t, int a) { return slice_cols(t, a, 1, 3); }),
       {randn(rng, {3, 5})}});
  cases.push_back({"sum_cols", op1("sum_cols", [](auto& t, int a) { return sum_cols(t, a); }),
                   {randn(rng, {3, 5})}});
  cases.push_back({"mean_rows", op1("mean_rows", [](auto& t, int a) { return mean_rows(t, a); }),
                   {randn(rng, {4, 3})}});
  cases.push_back({"sum_all", op1("sum_all", [](auto& t, int a) { return sum_all(t, a); }),
                   {randn(rng, {3, 4})}});
  cases.push_back({"mean_all", op1("mean_all", [](auto& t, int a) { return mean_all(t, a); }),
                   {randn(rng, {3, 4})}});
  cases.push_back({"concat_rows",
                   op2("concat_rows", [](auto& t, int a, int b) { return concat_rows(t, a, b); }),
                   {randn(rng, {2, 3}), randn(rng, {4, 3})}});
  cases.push_back({"mul_bcast_col",
                   op2("mul_bcast_col",
                       [](auto& t, int a, int b) { return mul_bcast_col(t, a, b); }),
                   {randn(rng, {4, 3}), randn(rng, {4, 1})}});
  cases.push_back({"scalar_affine",
                   {"scalar_affine",
                    [](Tape<double>& t, const std::vector<int>& in) {
                      return scalar_affine(t, in[0], in[1], in[2]);
                    }},
                   {randn(rng, {4, 3}), randn(rng, {1}), randn(rng, {1})}});
  return cases;
}

}  // namespace tsn
