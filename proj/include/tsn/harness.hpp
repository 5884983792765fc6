#pragma once

#include <string>
#include <vector>

#include "tsn/gradcheck.hpp"
#include "tsn/model.hpp"

namespace tsn {

struct GradEntry {
  std::string name;
  double err = 0;
  double tol = 0;
  bool ok = false;
};

struct GradReport {
  std::vector<GradEntry> entries;
  bool all_ok = true;

  void add(const std::string& name, double err, double tol) {
    entries.push_back({name, err, tol, err < tol});
    all_ok = all_ok && err < tol;
  }
};

namespace detail {

inline Tensor64 smooth_frame(Rng& rng, int n) {
  Tensor64 f({n, n, 3});
  for (int c = 0; c < 3; ++c) {
    const double base = rng.uniform(0.2, 0.8);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        f(y, x, c) = std::clamp(base + 0.25 * rng.normal() * 0.3 +
                                    0.2 * std::sin(0.7 * x + 0.3 * c) * std::cos(0.5 * y),
                                0.0, 1.0);
  }
  return f;
}

inline Tensor64 disk_mask(int n, double cy, double cx, double r) {
  Tensor64 m({n, n, 1});
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      m(y, x, 0) = ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) ? 1.0 : 0.0;
  return m;
}

struct E2eInputs {
  Tensor64 f1, m1, f2, m2;
};

inline E2eInputs e2e_inputs(uint64_t seed, int n = 8) {
  Rng rng(seed);
  E2eInputs in;
  in.f1 = smooth_frame(rng, n);
  in.f2 = smooth_frame(rng, n);
  in.m1 = disk_mask(n, n * 0.45, n * 0.4, n * 0.28);
  in.m2 = disk_mask(n, n * 0.5, n * 0.5, n * 0.3);
  return in;
}

// Full forward + combined loss of one memory frame and one query frame.
inline double e2e_loss(const Network<double>& net, const E2eInputs& in,
                       std::vector<Tensor64>* grads_out = nullptr) {
  Tape<double> tp;
  const ParamVars pv = push_params(tp, net.params);
  const int f1 = tp.leaf(in.f1);
  const int m1 = tp.leaf(in.m1);
  const int f2 = tp.leaf(in.f2);
  const int m2 = tp.leaf(in.m2);

  const EncodeOut enc1 = key_encode(tp, pv, f1, net.cfg);
  const int v1 = value_encode(tp, pv, f1, m1, net.cfg);
  double row = 0, col = 0;
  if (!mask_centroid(downsample_mask(in.m1, net.cfg.s), enc1.gh, enc1.gw, &row, &col))
    throw EmptyMemoryError("e2e_loss: empty reference mask");

  MemRefs<double> mem;
  mem.keys = enc1.key;
  mem.values = v1;
  mem.heads.push_back({predict_theta_mode(tp, pv, v1, net.cfg),
                       position_map<double>(net.cfg.position, row, col, enc1.gh, enc1.gw)});

  const QueryOut<double> q = forward_query_obj(tp, pv, net.cfg, f2, mem);
  const int loss =
      scale(tp, add(tp, bce_bootstrap(tp, q.logits, m2, 1.0), miou_loss(tp, q.prob, m2)),
            0.5);
  if (grads_out) {
    tp.backward(loss);
    *grads_out = collect_grads(tp, net.params, pv);
  }
  return tp.val(loss).data[0];
}

inline double e2e_rel_err(double a, double n) {
  return std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), 1e-3});
}

}  // namespace detail

// Central-difference check of the end-to-end loss gradient for a sample of
// every parameter tensor (E_init and the routing scalars in full).
inline double gradcheck_end_to_end(const ModelConfig& base_cfg, uint64_t seed = 123,
                                   double eps = 1e-5) {
  ModelConfig cfg = base_cfg;
  Network<double> net{cfg, init_params<double>(cfg)};
  const detail::E2eInputs in = detail::e2e_inputs(seed);

  std::vector<Tensor64> grads;
  detail::e2e_loss(net, in, &grads);

  double worst = 0.0;
  for (size_t pi = 0; pi < net.params.order.size(); ++pi) {
    const std::string& name = net.params.order[pi];
    Tensor64& param = net.params.at(name);
    size_t count = std::min<size_t>(3, param.numel());
    if (name == "inst.einit" || name == "route.a" || name == "route.b") count = param.numel();
    for (size_t e = 0; e < count; ++e) {
      const double keep = param.data[e];
      param.data[e] = keep + eps;
      const double lp = detail::e2e_loss(net, in);
      param.data[e] = keep - eps;
      const double lm = detail::e2e_loss(net, in);
      param.data[e] = keep;
      const double gn = (lp - lm) / (2.0 * eps);
      worst = std::max(worst, detail::e2e_rel_err(grads[pi].data[e], gn));
    }
  }
  return worst;
}

// With fusion pixel_only every instance-stream parameter gradient must be
// exactly zero (the stream is structurally disconnected).
inline bool instance_grads_exactly_zero(uint64_t seed = 123) {
  ModelConfig cfg;
  cfg.fusion = FusionMode::pixel_only;
  Network<double> net{cfg, init_params<double>(cfg)};
  std::vector<Tensor64> grads;
  detail::e2e_loss(net, detail::e2e_inputs(seed), &grads);
  for (size_t pi = 0; pi < net.params.order.size(); ++pi) {
    if (net.params.order[pi].rfind("inst.", 0) != 0) continue;
    for (double v : grads[pi].data)
      if (v != 0.0) return false;
  }
  return true;
}

// Every differentiable primitive, the two losses, and the end-to-end loss.
inline GradReport gradcheck_all(uint64_t seed = 123) {
  GradReport report;
  for (auto& c : core_grad_cases(seed)) report.add(c.name, grad_check(c.op, c.inputs), 1e-4);

  Rng rng(seed ^ 0xbeef);
  {
    Tensor64 logits({5, 3});
    Tensor64 target({5, 3});
    for (auto& v : logits.data) v = rng.normal();
    for (auto& v : target.data) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    DifferentiableOp<double> full{"bce_full", [](Tape<double>& t, const std::vector<int>& in) {
                                    return bce_bootstrap(t, in[0], in[1], 1.0);
                                  }};
    report.add("bce_bootstrap_full", grad_check(full, {logits, target}), 1e-4);
    DifferentiableOp<double> boot{"bce_boot", [](Tape<double>& t, const std::vector<int>& in) {
                                    return bce_bootstrap(t, in[0], in[1], 0.6);
                                  }};
    report.add("bce_bootstrap_0.6", grad_check(boot, {logits, target}), 1e-4);
  }
  {
    Tensor64 prob({4, 4});
    Tensor64 target({4, 4});
    for (auto& v : prob.data) v = rng.uniform(0.05, 0.95);
    for (auto& v : target.data) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    DifferentiableOp<double> op{"miou", [](Tape<double>& t, const std::vector<int>& in) {
                                  return miou_loss(t, in[0], in[1]);
                                }};
    report.add("miou_loss", grad_check(op, {prob, target}), 1e-4);
  }

  ModelConfig cfg;
  report.add("end_to_end", gradcheck_end_to_end(cfg, seed), 1e-3);
  report.add("pixel_only_inst_grads_zero", instance_grads_exactly_zero(seed) ? 0.0 : 1.0, 0.5);
  return report;
}

}  // namespace tsn
