#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "tsn/config.hpp"
#include "tsn/ops.hpp"
#include "tsn/params.hpp"

namespace tsn {

// Reference keys/values stacked over memory frames, row-major over each
// frame's stride-s grid.
template <typename T>
struct PixelMemory {
  TensorT<T> keys;    // [N*HW x C_k]
  TensorT<T> values;  // [N*HW x C_v]
  int frames = 0;

  int rows() const { return frames == 0 ? 0 : keys.shape[0]; }

  void append(const TensorT<T>& k, const TensorT<T>& v) {
    k.require_rank(2);
    v.require_rank(2);
    if (k.shape[0] != v.shape[0])
      throw DimensionError("pixel memory: key rows " + std::to_string(k.shape[0]) +
                           " vs value rows " + std::to_string(v.shape[0]));
    if (frames == 0) {
      keys = k;
      values = v;
    } else {
      if (k.shape[1] != keys.shape[1] || v.shape[1] != values.shape[1])
        throw DimensionError("pixel memory: channel mismatch on append");
      keys.shape[0] += k.shape[0];
      keys.data.insert(keys.data.end(), k.data.begin(), k.data.end());
      values.shape[0] += v.shape[0];
      values.data.insert(values.data.end(), v.data.begin(), v.data.end());
    }
    ++frames;
  }

  // Drop the rows of memory slot `slot` (one stored frame of `hw` rows).
  void erase_slot(int slot, int hw) {
    const size_t k0 = static_cast<size_t>(slot) * hw * keys.shape[1];
    keys.data.erase(keys.data.begin() + k0, keys.data.begin() + k0 + static_cast<size_t>(hw) * keys.shape[1]);
    keys.shape[0] -= hw;
    const size_t v0 = static_cast<size_t>(slot) * hw * values.shape[1];
    values.data.erase(values.data.begin() + v0,
                      values.data.begin() + v0 + static_cast<size_t>(hw) * values.shape[1]);
    values.shape[0] -= hw;
    --frames;
  }
};

// Softmax over memory locations of the negative squared distance.
template <typename T>
int affinity(Tape<T>& tp, int kq, int km) {
  return softmax_rows(tp, scale(tp, pairwise_sqdist(tp, kq, km), T(-1)));
}

// Weighted sum of memory values with the affinity rows.
template <typename T>
int read_value(Tape<T>& tp, int a, int vm) {
  return matmul(tp, a, vm);
}

// Dense differentiable read of both values and keys with a shared affinity.
template <typename T>
struct DenseRead {
  int a = -1, rv = -1, rk = -1;
};

template <typename T>
DenseRead<T> read_dense(Tape<T>& tp, int kq, int km, int vm) {
  DenseRead<T> out;
  out.a = affinity(tp, kq, km);
  out.rv = matmul(tp, out.a, vm);
  out.rk = matmul(tp, out.a, km);
  return out;
}

// Inference-only truncated read: per query pixel keep the k most similar
// memory entries, renormalize the softmax over the kept set, and aggregate
// values and keys with the same truncated affinity. Ties break toward the
// lowest memory index. With k >= rows this takes the dense kernels verbatim,
// so it is bit-identical to the dense path.
template <typename T>
struct TopkRead {
  TensorT<T> rv, rk;
};

template <typename T>
TopkRead<T> read_topk(const TensorT<T>& kq, const PixelMemory<T>& mem, int k,
                      bool force_truncated = false) {
  if (mem.frames == 0) throw EmptyMemoryError("read_topk: empty pixel memory");
  if (k < 1) throw DimensionError("read_topk: k must be >= 1");
  const int n = mem.rows();

  if (k >= n && !force_truncated) {
    TensorT<T> d = pairwise_sqdist_raw(kq, mem.keys);
    for (auto& v : d.data) v *= T(-1);
    TensorT<T> a = softmax_rows_raw(d);
    return TopkRead<T>{matmul_raw(a, mem.values), matmul_raw(a, mem.keys)};
  }

  const int m = kq.shape[0];
  const int cv = mem.values.shape[1];
  const int ck = mem.keys.shape[1];
  TopkRead<T> out{TensorT<T>({m, cv}), TensorT<T>({m, ck})};
  TensorT<T> d = pairwise_sqdist_raw(kq, mem.keys);

  std::vector<int> idx(static_cast<size_t>(n));
  std::vector<int> kept(static_cast<size_t>(k));
  std::vector<T> wgt(static_cast<size_t>(k));
  for (int p = 0; p < m; ++p) {
    const T* dr = d.data.data() + static_cast<size_t>(p) * n;
    for (int q = 0; q < n; ++q) idx[static_cast<size_t>(q)] = q;
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [dr](int a, int b) {
      if (dr[a] != dr[b]) return dr[a] < dr[b];  // smaller distance = larger similarity
      return a < b;
    });
    std::copy(idx.begin(), idx.begin() + k, kept.begin());
    std::sort(kept.begin(), kept.end());

    T mx = -dr[kept[0]];
    for (int i = 1; i < k; ++i) mx = std::max(mx, -dr[kept[static_cast<size_t>(i)]]);
    T sum = T(0);
    for (int i = 0; i < k; ++i) {
      wgt[static_cast<size_t>(i)] = std::exp(-dr[kept[static_cast<size_t>(i)]] - mx);
      sum += wgt[static_cast<size_t>(i)];
    }
    const T inv = T(1) / sum;
    T* rvp = out.rv.data.data() + static_cast<size_t>(p) * cv;
    T* rkp = out.rk.data.data() + static_cast<size_t>(p) * ck;
    for (int i = 0; i < k; ++i) {
      const T w = wgt[static_cast<size_t>(i)] * inv;
      const int q = kept[static_cast<size_t>(i)];
      const T* vrow = mem.values.data.data() + static_cast<size_t>(q) * cv;
      const T* krow = mem.keys.data.data() + static_cast<size_t>(q) * ck;
      for (int c = 0; c < cv; ++c) rvp[c] += w * vrow[c];
      for (int c = 0; c < ck; ++c) rkp[c] += w * krow[c];
    }
  }
  return out;
}

// Residual block over [R_V, F^t]: linear -> ReLU -> linear plus a projected
// shortcut, producing the pixel-stream mask embedding.
template <typename T>
int pixel_embed(Tape<T>& tp, const ParamVars& pv, int rv, int ft) {
  const TensorT<T>& a = tp.val(rv);
  const TensorT<T>& b = tp.val(ft);
  if (a.rank() != 2 || b.rank() != 2 || a.shape[0] != b.shape[0])
    throw DimensionError("pixel_embed: rows " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  const int x = concat_channels(tp, rv, ft);
  const int h = relu(tp, linear(tp, x, pv("pix.res.w1"), pv("pix.res.b1")));
  const int body = linear(tp, h, pv("pix.res.w2"), pv("pix.res.b2"));
  const int shortcut = linear(tp, x, pv("pix.res.ws"), pv("pix.res.bs"));
  return add(tp, body, shortcut);
}

}  // namespace tsn
