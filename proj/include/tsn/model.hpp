#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tsn/config.hpp"
#include "tsn/division_fusion.hpp"
#include "tsn/encoders.hpp"
#include "tsn/instance_stream.hpp"
#include "tsn/losses.hpp"
#include "tsn/memory_bank.hpp"
#include "tsn/pixel_stream.hpp"
#include "tsn/rng.hpp"
#include "tsn/serialize.hpp"

namespace tsn {

namespace detail {

template <typename T>
TensorT<T> init_normal(Rng& rng, std::vector<int> shape, double std) {
  TensorT<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(std * rng.normal());
  return t;
}

}  // namespace detail

// Deterministic parameter init; each tensor draws from its own named stream
// so the layout is stable under reordering.
template <typename T>
ParamStore<T> init_params(const ModelConfig& cfg) {
  ParamStore<T> p;
  auto stream = [&](const std::string& name) { return Rng(splitmix64(cfg.seed) ^ hash_str(name.c_str())); };
  auto conv = [&](const std::string& name, int kh, int kw, int cin, int cout) {
    Rng rng = stream(name);
    const double std = std::sqrt(2.0 / (kh * kw * cin));
    p.add(name + ".w", detail::init_normal<T>(rng, {kh, kw, cin, cout}, std));
    p.add(name + ".b", TensorT<T>({cout}));
  };
  auto lin = [&](const std::string& name, int cin, int cout, double gain) {
    Rng rng = stream(name);
    p.add(name + ".w", detail::init_normal<T>(rng, {cin, cout}, std::sqrt(gain / cin)));
    p.add(name + ".b", TensorT<T>({cout}));
  };

  const int c1 = cfg.enc_c1, cv = cfg.c_v, ck = cfg.c_k, tap = cfg.enc_tap;

  conv("enc.conv1", 3, 3, 3, c1);
  conv("enc.conv2", 3, 3, c1, cv);
  conv("enc.key", 3, 3, cv, ck);
  conv("enc.feat", 3, 3, cv, cv);
  conv("enc.tap1", 3, 3, 3, tap);
  conv("enc.val1", 3, 3, 4, c1);
  conv("enc.val2", 3, 3, c1, cv);
  conv("enc.val3", 3, 3, cv, cv);

  {
    Rng rng = stream("pix.res");
    p.add("pix.res.w1", detail::init_normal<T>(rng, {2 * cv, cv}, std::sqrt(2.0 / (2 * cv))));
    p.add("pix.res.b1", TensorT<T>({cv}));
    p.add("pix.res.w2", detail::init_normal<T>(rng, {cv, cv}, std::sqrt(2.0 / cv)));
    p.add("pix.res.b2", TensorT<T>({cv}));
    p.add("pix.res.ws", detail::init_normal<T>(rng, {2 * cv, cv}, std::sqrt(1.0 / (2 * cv))));
    p.add("pix.res.bs", TensorT<T>({cv}));
  }

  {
    Rng rng = stream("inst.einit");
    p.add("inst.einit", detail::init_normal<T>(rng, {1, cv}, 0.02));
  }
  for (int l = 0; l < 3; ++l) {
    const std::string base = "inst.pred.l" + std::to_string(l);
    Rng rng = stream(base);
    for (const char* part : {"wq", "wk", "wv", "wo"}) {
      p.add(base + "." + part, detail::init_normal<T>(rng, {cv, cv}, std::sqrt(1.0 / cv)));
      p.add(base + ".b" + std::string(1, part[1]), TensorT<T>({cv}));
    }
    p.add(base + ".w1", detail::init_normal<T>(rng, {cv, 2 * cv}, std::sqrt(2.0 / cv)));
    p.add(base + ".b1", TensorT<T>({2 * cv}));
    p.add(base + ".w2", detail::init_normal<T>(rng, {2 * cv, cv}, std::sqrt(1.0 / (2 * cv))));
    p.add(base + ".b2", TensorT<T>({cv}));
  }
  // zero-initialized final projection: early heads emit near-zero logits
  p.add("inst.pred.proj.w", TensorT<T>({cv, kThetaLen}));
  p.add("inst.pred.proj.b", TensorT<T>({kThetaLen}));

  lin("inst.wred", cv, kHeadChannels, 2.0);
  {
    Rng rng = stream("inst.res");
    p.add("inst.res.w1", detail::init_normal<T>(rng, {cv + 1, cv}, std::sqrt(2.0 / (cv + 1))));
    p.add("inst.res.b1", TensorT<T>({cv}));
    p.add("inst.res.w2", detail::init_normal<T>(rng, {cv, cv}, std::sqrt(2.0 / cv)));
    p.add("inst.res.b2", TensorT<T>({cv}));
    p.add("inst.res.ws", detail::init_normal<T>(rng, {cv + 1, cv}, std::sqrt(1.0 / (cv + 1))));
    p.add("inst.res.bs", TensorT<T>({cv}));
  }

  p.add("route.a", TensorT<T>({1}, {T(1)}));
  p.add("route.b", TensorT<T>({1}, {T(0)}));

  conv("dec.proj2", 1, 1, c1, cv);
  conv("dec.d1", 3, 3, cv, cv / 2);
  conv("dec.proj1", 1, 1, tap, cv / 2);
  conv("dec.d2", 3, 3, cv / 2, cv / 4);
  // zero-initialized logit head: untrained output is probability 0.5
  p.add("dec.out.w", TensorT<T>({1, 1, cv / 4, 1}));
  p.add("dec.out.b", TensorT<T>({1}));

  return p;
}

template <typename T>
struct Network {
  ModelConfig cfg;
  ParamStore<T> params;
};

template <typename T>
Network<T> init_network(const ModelConfig& cfg) {
  validate(cfg);
  return Network<T>{cfg, init_params<T>(cfg)};
}

inline Network<float> network_from_checkpoint(const Checkpoint& ckpt) {
  Network<float> net = init_network<float>(ckpt.config);
  if (ckpt.tensors.size() != net.params.order.size())
    throw InputError("checkpoint tensor count does not match the model layout");
  for (const auto& blob : ckpt.tensors) {
    Tensor& dst = net.params.at(blob.name);
    Tensor src = from_blob<float>(blob);
    if (src.shape != dst.shape)
      throw InputError("checkpoint tensor " + blob.name + " has shape " + shape_str(src.shape) +
                       ", expected " + shape_str(dst.shape));
    dst = std::move(src);
  }
  return net;
}

template <typename T>
Checkpoint to_checkpoint(const Network<T>& net) {
  Checkpoint ckpt;
  ckpt.config = net.cfg;
  for (const auto& name : net.params.order)
    ckpt.tensors.push_back(to_blob<T>(name, net.params.at(name)));
  return ckpt;
}

// Memory handles for one query forward. Tape ids for the dense path; the raw
// pointer backs the inference-only top-k path.
template <typename T>
struct MemRefs {
  int keys = -1;
  int values = -1;
  std::vector<HeadInstance<T>> heads;
  const PixelMemory<T>* raw = nullptr;
};

template <typename T>
struct ForwardOpts {
  bool use_topk = false;
  int k = 20;
  const TensorT<T>* w_override = nullptr;  // test hook: forces W at fusion
};

template <typename T>
struct QueryOut {
  EncodeOut enc;
  int logits = -1;     // [H x W x 1]
  int prob = -1;
  int routing_w = -1;  // [HW x 1]; -1 unless fusion computed a routing map
};

// One object's full query pass: pixel stream, instance stream, routing and
// fusion per the configured mode, then decoding to image-resolution logits.
template <typename T>
QueryOut<T> forward_query_obj(Tape<T>& tp, const ParamVars& pv, const ModelConfig& cfg,
                              int frame, const MemRefs<T>& mem,
                              const ForwardOpts<T>& opts = {}) {
  const bool need_pixel = cfg.fusion != FusionMode::instance_only;
  const bool need_instance = cfg.fusion != FusionMode::pixel_only;
  const bool need_routing = cfg.fusion == FusionMode::routing;

  QueryOut<T> out;
  out.enc = key_encode(tp, pv, frame, cfg);
  const int hw = out.enc.gh * out.enc.gw;

  int f_pix = -1, f_inst = -1;
  if (need_pixel) {
    int rv = -1, rk = -1;
    if (opts.use_topk) {
      if (mem.raw == nullptr || mem.raw->frames == 0)
        throw EmptyMemoryError("forward_query: empty pixel memory");
      TopkRead<T> tr = read_topk(tp.val(out.enc.key), *mem.raw, opts.k);
      rv = tp.leaf(std::move(tr.rv));
      if (need_routing) rk = tp.leaf(std::move(tr.rk));
    } else {
      if (mem.keys < 0 || mem.values < 0)
        throw EmptyMemoryError("forward_query: empty pixel memory");
      if (need_routing) {
        DenseRead<T> dr = read_dense(tp, out.enc.key, mem.keys, mem.values);
        rv = dr.rv;
        rk = dr.rk;
      } else {
        const int a = affinity(tp, out.enc.key, mem.keys);
        rv = read_value(tp, a, mem.values);
      }
    }
    f_pix = pixel_embed(tp, pv, rv, out.enc.feat);
    if (need_routing) {
      RoutingOut<T> r = routing(tp, pv, rk, out.enc.key, cfg.c_k);
      out.routing_w = r.w;
    }
  }
  if (need_instance) {
    const int o_inst = apply_instance_memory(tp, pv, out.enc.feat, mem.heads);
    f_inst = instance_embed(tp, pv, o_inst, out.enc.feat);
  }

  int fused = -1;
  switch (cfg.fusion) {
    case FusionMode::pixel_only: fused = f_pix; break;
    case FusionMode::instance_only: fused = f_inst; break;
    case FusionMode::equal: {
      const int half = tp.leaf(TensorT<T>::full({hw, 1}, T(0.5)));
      fused = fuse(tp, half, f_inst, f_pix);
      break;
    }
    case FusionMode::routing: fused = fuse(tp, out.routing_w, f_inst, f_pix); break;
  }
  if (opts.w_override != nullptr) {
    if (f_inst < 0 || f_pix < 0) throw Error("w_override requires both streams");
    fused = fuse(tp, tp.leaf(*opts.w_override), f_inst, f_pix);
  }

  out.logits = decode(tp, pv, fused, out.enc, cfg);
  out.prob = sigmoid(tp, out.logits);
  return out;
}

// Build tape handles from a stored object memory (inference). For the
// single-pooled-head mode the head is re-predicted from the whole value
// memory; otherwise stored thetas become leaves.
template <typename T>
MemRefs<T> mem_to_tape(Tape<T>& tp, const ParamVars& pv, const ModelConfig& cfg,
                       const ObjectMemory<T>& mem, int gh, int gw) {
  MemRefs<T> refs;
  refs.raw = &mem.pix;
  if (mem.pix.frames > 0) {
    refs.keys = tp.leaf(mem.pix.keys);
    refs.values = tp.leaf(mem.pix.values);
  }
  if (cfg.instance == InstanceMode::single_pooled_head) {
    if (mem.pix.frames > 0 && !mem.inst.heads.empty()) {
      const int theta = predict_theta_mode(tp, pv, refs.values, cfg);
      double row = 0.0, col = 0.0, area = 0.0;
      for (const auto& h : mem.inst.heads) {
        row += h.centroid_row;
        col += h.centroid_col;
        area += 1.0;
      }
      row /= area;
      col /= area;
      refs.heads.push_back(
          {theta, position_map<T>(cfg.position, row * gh, col * gw, gh, gw)});
    }
  } else {
    for (const auto& h : mem.inst.heads) {
      refs.heads.push_back({tp.leaf(h.theta), position_map<T>(cfg.position, h.centroid_row * gh,
                                                              h.centroid_col * gw, gh, gw)});
    }
  }
  return refs;
}

// Encode one reference frame (image + per-object masks) and append it to the
// video state. Objects absent from the mask get pixel rows but no head.
template <typename T>
void write_reference(const Network<T>& net, VideoState<T>& state, const TensorT<T>& frame,
                     const std::map<int, TensorT<T>>& masks, int frame_index) {
  Tape<T> tp;
  const ParamVars pv = push_params(tp, net.params);
  const int frame_id = tp.leaf(frame);
  const EncodeOut enc = key_encode(tp, pv, frame_id, net.cfg);
  const int gh = enc.gh, gw = enc.gw;
  if (state.first_frame < 0) {
    state.first_frame = frame_index;
    state.hw = gh * gw;
  }
  // copy: later ops may grow the tape and invalidate references into it
  const TensorT<T> keys = tp.val(enc.key);

  for (const auto& [obj, mask] : masks) {
    const int mask_id = tp.leaf(mask);
    const int vm = value_encode(tp, pv, frame_id, mask_id, net.cfg);

    const TensorT<T> grid_mask = downsample_mask(mask, net.cfg.s);
    double row = 0.0, col = 0.0;
    const bool present = mask_centroid(grid_mask, gh, gw, &row, &col);

    std::optional<SegHead<T>> head;
    if (present && net.cfg.instance != InstanceMode::single_pooled_head) {
      const int theta = predict_theta_mode(tp, pv, vm, net.cfg);
      head = SegHead<T>{tp.val(theta), row / gh, col / gw, frame_index};
    } else if (present) {
      // pooled mode: record presence/centroid only; theta comes at query time
      head = SegHead<T>{TensorT<T>({1, kThetaLen}), row / gh, col / gw, frame_index};
    }
    append_reference(state.objects[obj], frame_index, keys, tp.val(vm), std::move(head));
    evict_to_capacity(state.objects[obj], net.cfg.n_max, state.first_frame, state.hw);
  }
}

// Soft aggregation of per-object probability maps into a label map: the
// background score is the product of complements, ties go to the lowest id.
inline std::vector<uint8_t> aggregate_objects(const std::vector<int>& ids,
                                              const std::vector<const Tensor*>& probs, int h,
                                              int w) {
  if (ids.empty() || ids.size() != probs.size())
    throw Error("aggregate_objects: need at least one object probability map");
  std::vector<uint8_t> label(static_cast<size_t>(h) * w, 0);
  for (size_t p = 0; p < label.size(); ++p) {
    double bg = 1.0;
    for (const Tensor* pr : probs) bg *= 1.0 - pr->data[p];
    double total = bg;
    for (const Tensor* pr : probs) total += pr->data[p];
    double best = bg / total;
    int best_id = 0;
    for (size_t i = 0; i < probs.size(); ++i) {
      const double score = probs[i]->data[p] / total;
      if (score > best) {
        best = score;
        best_id = ids[i];
      }
    }
    label[p] = static_cast<uint8_t>(best_id);
  }
  return label;
}

}  // namespace tsn
