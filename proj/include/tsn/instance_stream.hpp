#pragma once

#include <cmath>
#include <vector>

#include "tsn/config.hpp"
#include "tsn/ops.hpp"
#include "tsn/params.hpp"

namespace tsn {

// A dynamically generated segmentation head: packed parameter vector theta
// plus the source instance's centroid in normalized grid coordinates.
template <typename T>
struct SegHead {
  TensorT<T> theta;  // [1 x kThetaLen]
  double centroid_row = 0.0;  // fraction of grid height
  double centroid_col = 0.0;  // fraction of grid width
  int source_frame = -1;
};

template <typename T>
struct InstanceMemory {
  std::vector<SegHead<T>> heads;
};

// Relative coordinate map with the centroid (grid units) as origin; a pixel
// one half-extent away maps to magnitude 1. Channel 0 is x, channel 1 is y.
template <typename T>
TensorT<T> coord_map(double centroid_row, double centroid_col, int h, int w) {
  TensorT<T> m({h * w, 2});
  const double hx = w / 2.0, hy = h / 2.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t p = static_cast<size_t>(y) * w + x;
      m.data[p * 2 + 0] = static_cast<T>((x - centroid_col) / hx);
      m.data[p * 2 + 1] = static_cast<T>((y - centroid_row) / hy);
    }
  return m;
}

// Absolute sine position encoding, one channel per axis.
template <typename T>
TensorT<T> sine_map(int h, int w) {
  TensorT<T> m({h * w, 2});
  const double pi = 3.14159265358979323846;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t p = static_cast<size_t>(y) * w + x;
      m.data[p * 2 + 0] = static_cast<T>(std::sin(pi * (x + 0.5) / w));
      m.data[p * 2 + 1] = static_cast<T>(std::sin(pi * (y + 0.5) / h));
    }
  return m;
}

template <typename T>
TensorT<T> position_map(PositionMode mode, double centroid_row, double centroid_col, int h,
                        int w) {
  switch (mode) {
    case PositionMode::rel_coord: return coord_map<T>(centroid_row, centroid_col, h, w);
    case PositionMode::sine: return sine_map<T>(h, w);
    case PositionMode::none: return TensorT<T>({h * w, 2});
  }
  throw Error("bad position mode");
}

// Kernel predictor: E_init cross-attends to the value tokens through three
// plain single-head transformer layers, then projects to theta.
template <typename T>
int predict_theta(Tape<T>& tp, const ParamVars& pv, int vm, const ModelConfig& cfg) {
  const TensorT<T>& tokens = tp.val(vm);
  tokens.require_rank(2);
  if (tokens.shape[1] != cfg.c_v)
    throw DimensionError("predict_theta: token width " + shape_str(tokens.shape));
  const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg.c_v)));

  int e = pv("inst.einit");
  for (int l = 0; l < 3; ++l) {
    const std::string p = "inst.pred.l" + std::to_string(l) + ".";
    const int q = linear(tp, e, pv(p + "wq"), pv(p + "bq"));
    const int k = linear(tp, vm, pv(p + "wk"), pv(p + "bk"));
    const int v = linear(tp, vm, pv(p + "wv"), pv(p + "bv"));
    const int scores = scale(tp, matmul(tp, q, transpose(tp, k)), inv_sqrt_d);
    const int att = matmul(tp, softmax_rows(tp, scores), v);
    e = add(tp, e, linear(tp, att, pv(p + "wo"), pv(p + "bo")));
    const int f1 = relu(tp, linear(tp, e, pv(p + "w1"), pv(p + "b1")));
    e = add(tp, e, linear(tp, f1, pv(p + "w2"), pv(p + "b2")));
  }
  return linear(tp, e, pv("inst.pred.proj.w"), pv("inst.pred.proj.b"));
}

// Table-3 "GAP" ablation: the predictor collapses to global average pooling
// over the tokens followed by the same final projection.
template <typename T>
int predict_theta_gap(Tape<T>& tp, const ParamVars& pv, int vm) {
  return linear(tp, mean_rows(tp, vm), pv("inst.pred.proj.w"), pv("inst.pred.proj.b"));
}

template <typename T>
int predict_theta_mode(Tape<T>& tp, const ParamVars& pv, int vm, const ModelConfig& cfg) {
  if (cfg.instance == InstanceMode::gap_predictor) return predict_theta_gap(tp, pv, vm);
  return predict_theta(tp, pv, vm, cfg);
}

// theta slices, in order: conv1 w/b, conv2 w/b, conv3 w/b.
struct HeadLayers {
  int w1, b1, w2, b2, w3, b3;
};

template <typename T>
HeadLayers unpack_head(Tape<T>& tp, int theta) {
  const TensorT<T>& t = tp.val(theta);
  if (t.rank() != 2 || t.shape[0] != 1 || t.shape[1] != kThetaLen)
    throw DimensionError("unpack_head: expected [1x" + std::to_string(kThetaLen) + "], got " +
                         shape_str(t.shape));
  constexpr int ci = kHeadInputChannels, ch = kHeadChannels;
  int at = 0;
  HeadLayers h{};
  h.w1 = reshape(tp, slice_cols(tp, theta, at, at + ci * ch), {ci, ch});
  at += ci * ch;
  h.b1 = reshape(tp, slice_cols(tp, theta, at, at + ch), {ch});
  at += ch;
  h.w2 = reshape(tp, slice_cols(tp, theta, at, at + ch * ch), {ch, ch});
  at += ch * ch;
  h.b2 = reshape(tp, slice_cols(tp, theta, at, at + ch), {ch});
  at += ch;
  h.w3 = reshape(tp, slice_cols(tp, theta, at, at + ch), {ch, 1});
  at += ch;
  h.b3 = reshape(tp, slice_cols(tp, theta, at, at + 1), {1});
  return h;
}

// One head instance ready to apply to a query: its theta node plus its
// position map (leaf data, not differentiated).
template <typename T>
struct HeadInstance {
  int theta = -1;
  TensorT<T> pos;
};

// Eq-3 style application: every head segments the reduced query feature
// concatenated with its own position map; results are averaged.
template <typename T>
int apply_instance_memory(Tape<T>& tp, const ParamVars& pv, int ft,
                          const std::vector<HeadInstance<T>>& heads) {
  if (heads.empty()) throw EmptyMemoryError("apply_instance_memory: no segmentation heads");
  const int x8 = linear(tp, ft, pv("inst.wred.w"), pv("inst.wred.b"));
  int acc = -1;
  for (const auto& head : heads) {
    const int x10 = concat_channels(tp, x8, tp.leaf(head.pos));
    const HeadLayers hl = unpack_head(tp, head.theta);
    const int h1 = relu(tp, linear(tp, x10, hl.w1, hl.b1));
    const int h2 = relu(tp, linear(tp, h1, hl.w2, hl.b2));
    const int o = linear(tp, h2, hl.w3, hl.b3);
    acc = acc < 0 ? o : add(tp, acc, o);
  }
  return scale(tp, acc, static_cast<T>(1.0 / static_cast<double>(heads.size())));
}

// Residual block over [O_Inst, F^t] producing the instance-stream embedding.
template <typename T>
int instance_embed(Tape<T>& tp, const ParamVars& pv, int o_inst, int ft) {
  const TensorT<T>& a = tp.val(o_inst);
  const TensorT<T>& b = tp.val(ft);
  if (a.rank() != 2 || b.rank() != 2 || a.shape[0] != b.shape[0])
    throw DimensionError("instance_embed: rows " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
  const int x = concat_channels(tp, o_inst, ft);
  const int h = relu(tp, linear(tp, x, pv("inst.res.w1"), pv("inst.res.b1")));
  const int body = linear(tp, h, pv("inst.res.w2"), pv("inst.res.b2"));
  const int shortcut = linear(tp, x, pv("inst.res.ws"), pv("inst.res.bs"));
  return add(tp, body, shortcut);
}

// Soft mask-weighted centroid at stride-s resolution, in grid units.
// Returns false when the object has no support on the grid.
template <typename T>
bool mask_centroid(const TensorT<T>& grid_mask, int gh, int gw, double* row, double* col) {
  double area = 0.0, ry = 0.0, rx = 0.0;
  for (int y = 0; y < gh; ++y)
    for (int x = 0; x < gw; ++x) {
      const double v = grid_mask.data[static_cast<size_t>(y) * gw + x];
      area += v;
      ry += v * y;
      rx += v * x;
    }
  if (area <= 0.0) return false;
  *row = ry / area;
  *col = rx / area;
  return true;
}

// Average-pool a full-resolution mask [H x W x 1] to the stride-s grid.
template <typename T>
TensorT<T> downsample_mask(const TensorT<T>& mask, int s) {
  mask.require_rank(3);
  const int h = mask.shape[0] / s, w = mask.shape[1] / s;
  TensorT<T> g({h * w, 1});
  const T inv = static_cast<T>(1.0 / (s * s));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      T acc = T(0);
      for (int dy = 0; dy < s; ++dy)
        for (int dx = 0; dx < s; ++dx)
          acc += mask.data[(static_cast<size_t>(y * s + dy) * mask.shape[1] + (x * s + dx))];
      g.data[static_cast<size_t>(y) * w + x] = acc * inv;
    }
  return g;
}

}  // namespace tsn
