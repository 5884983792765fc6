#pragma once

#include <cmath>
#include <fstream>
#include <ostream>
#include <vector>

#include "tsn/model.hpp"
#include "tsn/synth.hpp"

namespace tsn {

struct TrainStats {
  int iteration = 0;
  double loss = 0, bce = 0, miou = 0, lr = 0;
};

namespace detail {

// Grid presence of an object in a soft or binary full-resolution mask.
inline bool grid_present(const Tensor& mask, int s, int gh, int gw, double* row, double* col) {
  const Tensor grid = downsample_mask(mask, s);
  return mask_centroid(grid, gh, gw, row, col);
}

}  // namespace detail

template <typename T>
struct ClipResult {
  double loss = 0, bce = 0, miou = 0;
  std::vector<TensorT<T>> grads;
};

// One three-frame clip: frame 1 is memory, frames 2 and 3 are segmented
// sequentially with frame 2's soft prediction written into the memory, and
// the combined loss is backpropagated through the whole chain.
template <typename T>
ClipResult<T> train_clip(const Network<T>& net, const Clip& clip, double frac) {
  const ModelConfig& cfg = net.cfg;
  Tape<T> tp;
  const ParamVars pv = push_params(tp, net.params);

  const int f1 = tp.leaf(clip.frames[0].template cast<T>());
  const int m1 = tp.leaf(clip.masks[0].template cast<T>());
  const int f2 = tp.leaf(clip.frames[1].template cast<T>());
  const int m2 = tp.leaf(clip.masks[1].template cast<T>());
  const int f3 = tp.leaf(clip.frames[2].template cast<T>());
  const int m3 = tp.leaf(clip.masks[2].template cast<T>());

  const EncodeOut enc1 = key_encode(tp, pv, f1, cfg);
  const int gh = enc1.gh, gw = enc1.gw;
  const int v1 = value_encode(tp, pv, f1, m1, cfg);

  double c1r = 0, c1c = 0;
  if (!detail::grid_present(clip.masks[0], cfg.s, gh, gw, &c1r, &c1c))
    throw EmptyMemoryError("train_clip: object absent from the reference frame");

  // with a single reference frame the pooled head equals the per-frame head
  MemRefs<T> mem1;
  mem1.keys = enc1.key;
  mem1.values = v1;
  mem1.heads.push_back(
      {predict_theta_mode(tp, pv, v1, cfg), position_map<T>(cfg.position, c1r, c1c, gh, gw)});

  const QueryOut<T> q2 = forward_query_obj(tp, pv, cfg, f2, mem1);
  const int loss2_bce = bce_bootstrap(tp, q2.logits, m2, frac);
  const int loss2_iou = miou_loss(tp, q2.prob, m2);

  // frame 2's prediction becomes a reference: soft mask into the value
  // encoder, centroid detached
  const int v2 = value_encode(tp, pv, f2, q2.prob, cfg);
  MemRefs<T> mem2;
  mem2.keys = concat_rows(tp, enc1.key, q2.enc.key);
  mem2.values = concat_rows(tp, v1, v2);
  const Tensor soft2 = tp.val(q2.prob).template cast<float>();
  double c2r = c1r, c2c = c1c;
  const bool present2 = detail::grid_present(soft2, cfg.s, gh, gw, &c2r, &c2c);
  if (cfg.instance == InstanceMode::single_pooled_head) {
    const int tokens = concat_rows(tp, v1, v2);
    const double row = present2 ? 0.5 * (c1r + c2r) : c1r;
    const double col = present2 ? 0.5 * (c1c + c2c) : c1c;
    mem2.heads.push_back({predict_theta_mode(tp, pv, tokens, cfg),
                          position_map<T>(cfg.position, row, col, gh, gw)});
  } else {
    mem2.heads = mem1.heads;
    if (present2)
      mem2.heads.push_back({predict_theta_mode(tp, pv, v2, cfg),
                            position_map<T>(cfg.position, c2r, c2c, gh, gw)});
  }

  const QueryOut<T> q3 = forward_query_obj(tp, pv, cfg, f3, mem2);
  const int loss3_bce = bce_bootstrap(tp, q3.logits, m3, frac);
  const int loss3_iou = miou_loss(tp, q3.prob, m3);

  const int bce = add(tp, loss2_bce, loss3_bce);
  const int iou = add(tp, loss2_iou, loss3_iou);
  const int total = scale(tp, add(tp, bce, iou), T(0.5));
  tp.backward(total);

  ClipResult<T> out;
  out.loss = tp.val(total).data[0];
  out.bce = 0.5 * tp.val(bce).data[0];
  out.miou = 0.5 * tp.val(iou).data[0];
  out.grads = collect_grads(tp, net.params, pv);
  return out;
}

inline double poly_lr(const ModelConfig& cfg, int iteration) {
  const double frac = 1.0 - static_cast<double>(iteration) / cfg.iterations;
  return cfg.lr * std::pow(frac, cfg.poly_power);
}

// Desk-scale training loop: curriculum-sampled clips, Adam with poly decay,
// deterministic given cfg.seed.
inline Network<float> train(const std::vector<VideoSample>& corpus, const ModelConfig& cfg,
                            std::vector<TrainStats>* curve = nullptr,
                            std::ostream* log = nullptr) {
  if (corpus.empty()) throw InputError("train: empty corpus");
  Network<float> net = init_network<float>(cfg);
  Adam adam;
  Rng rng(splitmix64(cfg.seed ^ 0x7261696e5f746eull));

  for (int it = 0; it < cfg.iterations; ++it) {
    const double frac = bootstrap_frac(it, cfg.iterations, cfg.bootstrap_warm, cfg.bootstrap_final);
    std::vector<Tensor> grads;
    double loss = 0, bce = 0, miou = 0;
    for (int b = 0; b < cfg.batch; ++b) {
      Clip clip;
      double row = 0, col = 0;
      int tries = 0;
      do {
        clip = sample_training_clip(corpus, it, cfg.iterations, rng);
      } while (!detail::grid_present(clip.masks[0], cfg.s, clip.masks[0].shape[0] / cfg.s,
                                     clip.masks[0].shape[1] / cfg.s, &row, &col) &&
               ++tries < 16);
      ClipResult<float> r = train_clip(net, clip, frac);
      loss += r.loss;
      bce += r.bce;
      miou += r.miou;
      if (grads.empty()) {
        grads = std::move(r.grads);
      } else {
        for (size_t i = 0; i < grads.size(); ++i) accum(grads[i], r.grads[i]);
      }
    }
    const double inv = 1.0 / cfg.batch;
    for (auto& g : grads)
      for (auto& v : g.data) v = static_cast<float>(v * inv);
    loss *= inv;
    bce *= inv;
    miou *= inv;
    if (!std::isfinite(loss))
      throw NumericalError("training diverged at iteration " + std::to_string(it) +
                           " (loss is not finite)");

    const double lr = poly_lr(cfg, it);
    adam.step(net.params, grads, lr);

    if (curve) curve->push_back({it, loss, bce, miou, lr});
    if (log && (it % 50 == 0 || it + 1 == cfg.iterations))
      *log << "iter " << it << " loss " << loss << " bce " << bce << " miou " << miou << " lr "
           << lr << "\n";
  }
  return net;
}

inline void write_loss_csv(const std::vector<TrainStats>& curve, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot open for write: " + path);
  f << "iteration,loss,bce,miou,lr\n";
  char buf[128];
  for (const auto& s : curve) {
    std::snprintf(buf, sizeof(buf), "%d,%.8f,%.8f,%.8f,%.8g\n", s.iteration, s.loss, s.bce,
                  s.miou, s.lr);
    f << buf;
  }
}

}  // namespace tsn
