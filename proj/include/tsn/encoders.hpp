#pragma once

#include "tsn/config.hpp"
#include "tsn/ops.hpp"
#include "tsn/params.hpp"

namespace tsn {

// Key/feature encoder outputs for one frame: flattened key map, flattened
// deep feature map, and the two decoder skip taps (stride 2 and stride 1).
struct EncodeOut {
  int key = -1;      // [HW x C_k]
  int feat = -1;     // [HW x C_v]
  int skip_s2 = -1;  // [H/2 x W/2 x enc_c1]
  int skip_s1 = -1;  // [H x W x enc_tap]
  int gh = 0, gw = 0;  // stride-s grid extents
};

template <typename T>
void require_stride_divisible(const TensorT<T>& frame, int s) {
  frame.require_rank(3);
  if (frame.shape[0] % s != 0 || frame.shape[1] % s != 0)
    throw DimensionError("frame extents " + shape_str(frame.shape) + " not divisible by stride " +
                         std::to_string(s));
}

// Shared trunk (two stride-2 convs) feeding both the key head and the
// query-feature head, plus the skip taps for the decoder.
template <typename T>
EncodeOut key_encode(Tape<T>& tp, const ParamVars& pv, int frame, const ModelConfig& cfg) {
  const TensorT<T>& x = tp.val(frame);
  require_stride_divisible(x, cfg.s);
  EncodeOut out;
  out.gh = x.shape[0] / cfg.s;
  out.gw = x.shape[1] / cfg.s;
  const int hw = out.gh * out.gw;

  const int t1 = avgpool2x2(tp, relu(tp, conv2d(tp, frame, pv("enc.conv1.w"), pv("enc.conv1.b"), 1, 1)));
  const int t2 = avgpool2x2(tp, relu(tp, conv2d(tp, t1, pv("enc.conv2.w"), pv("enc.conv2.b"), 1, 1)));
  const int k3 = conv2d(tp, t2, pv("enc.key.w"), pv("enc.key.b"), 1, 1);
  const int f3 = conv2d(tp, t2, pv("enc.feat.w"), pv("enc.feat.b"), 1, 1);

  out.key = reshape(tp, k3, {hw, cfg.c_k});
  out.feat = reshape(tp, f3, {hw, cfg.c_v});
  out.skip_s2 = t1;
  out.skip_s1 = relu(tp, conv2d(tp, frame, pv("enc.tap1.w"), pv("enc.tap1.b"), 1, 1));
  return out;
}

// Value encoder over frame plus mask channel, stride-s output [HW x C_v].
template <typename T>
int value_encode(Tape<T>& tp, const ParamVars& pv, int frame, int mask, const ModelConfig& cfg) {
  const TensorT<T>& x = tp.val(frame);
  const TensorT<T>& m = tp.val(mask);
  require_stride_divisible(x, cfg.s);
  m.require_rank(3);
  if (m.shape[0] != x.shape[0] || m.shape[1] != x.shape[1] || m.shape[2] != 1)
    throw DimensionError("value_encode: mask " + shape_str(m.shape) + " does not match frame " +
                         shape_str(x.shape));
  const int hw = (x.shape[0] / cfg.s) * (x.shape[1] / cfg.s);

  const int xm = concat_channels(tp, frame, mask);
  const int v1 = avgpool2x2(tp, relu(tp, conv2d(tp, xm, pv("enc.val1.w"), pv("enc.val1.b"), 1, 1)));
  const int v2 = avgpool2x2(tp, relu(tp, conv2d(tp, v1, pv("enc.val2.w"), pv("enc.val2.b"), 1, 1)));
  const int v3 = conv2d(tp, v2, pv("enc.val3.w"), pv("enc.val3.b"), 1, 1);
  return reshape(tp, v3, {hw, cfg.c_v});
}

}  // namespace tsn
