#pragma once

#include "tsn/config.hpp"
#include "tsn/encoders.hpp"
#include "tsn/ops.hpp"
#include "tsn/params.hpp"

namespace tsn {

// Eq-4 style weighted sum of the key features with the affinity rows.
template <typename T>
int aggregate_key(Tape<T>& tp, int a, int km) {
  return matmul(tp, a, km);
}

template <typename T>
struct RoutingOut {
  int w = -1;  // [HW x 1] in (0,1)
  int d = -1;  // [HW x 1] per-pixel squared retrieval residual
};

// Per-pixel squared residual between the aggregated key and the query key,
// normalized by the key width, through a learnable scalar affine map and a
// sigmoid.
template <typename T>
RoutingOut<T> routing(Tape<T>& tp, const ParamVars& pv, int rk, int kq, int c_k) {
  require_same_shape(tp.val(rk), tp.val(kq), "routing");
  RoutingOut<T> out;
  const int diff = sub(tp, rk, kq);
  out.d = sum_cols(tp, mul(tp, diff, diff));
  const int dn = scale(tp, out.d, static_cast<T>(1.0 / c_k));
  out.w = sigmoid(tp, scalar_affine(tp, dn, pv("route.a"), pv("route.b")));
  return out;
}

// F = W * F_Inst + (1 - W) * F_Pix, W broadcast over channels.
template <typename T>
int fuse(Tape<T>& tp, int w, int f_inst, int f_pix) {
  require_same_shape(tp.val(f_inst), tp.val(f_pix), "fuse");
  const int one_minus_w = affine_const(tp, w, T(-1), T(1));
  return add(tp, mul_bcast_col(tp, f_inst, w), mul_bcast_col(tp, f_pix, one_minus_w));
}

// FPN-style decoder: two x2 upsampling stages, each adding a projected skip
// then conv3x3 + ReLU, and a final 1x1 conv to one logit channel. With the
// stride-4 backbone the second stage already reaches image resolution.
template <typename T>
int decode(Tape<T>& tp, const ParamVars& pv, int f, const EncodeOut& enc,
           const ModelConfig& cfg) {
  const TensorT<T>& fv = tp.val(f);
  fv.require_rank(2);
  if (fv.shape[0] != enc.gh * enc.gw || fv.shape[1] != cfg.c_v)
    throw DimensionError("decode: fused embedding " + shape_str(fv.shape));

  int x = reshape(tp, f, {enc.gh, enc.gw, cfg.c_v});
  x = bilinear_upsample(tp, x, 2);
  x = add(tp, x, conv2d(tp, enc.skip_s2, pv("dec.proj2.w"), pv("dec.proj2.b"), 1, 0));
  x = relu(tp, conv2d(tp, x, pv("dec.d1.w"), pv("dec.d1.b"), 1, 1));
  x = bilinear_upsample(tp, x, 2);
  x = add(tp, x, conv2d(tp, enc.skip_s1, pv("dec.proj1.w"), pv("dec.proj1.b"), 1, 0));
  x = relu(tp, conv2d(tp, x, pv("dec.d2.w"), pv("dec.d2.b"), 1, 1));
  return conv2d(tp, x, pv("dec.out.w"), pv("dec.out.b"), 1, 0);
}

}  // namespace tsn
