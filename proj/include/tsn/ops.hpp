#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "tsn/tape.hpp"
#include "tsn/tensor.hpp"

namespace tsn {

// ---------------------------------------------------------------------------
// Raw kernels (forward only, no tape). The inference top-k path reuses these
// so the dense and truncated reads share the exact same arithmetic.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> matmul_raw(const TensorT<T>& a, const TensorT<T>& b) {
  a.require_rank(2);
  b.require_rank(2);
  if (a.shape[1] != b.shape[0])
    throw DimensionError("matmul: inner extents " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
  const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  TensorT<T> c({m, n});
  const T* A = a.data.data();
  const T* B = b.data.data();
  T* C = c.data.data();
  for (int i = 0; i < m; ++i) {
    const T* arow = A + static_cast<size_t>(i) * k;
    T* crow = C + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      const T* brow = B + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// a[m,k] * b[n,k]^T -> [m,n]
template <typename T>
TensorT<T> matmul_nt_raw(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape[1] != b.shape[1])
    throw DimensionError("matmul_nt: inner extents " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
  const int m = a.shape[0], k = a.shape[1], n = b.shape[0];
  TensorT<T> c({m, n});
  for (int i = 0; i < m; ++i) {
    const T* arow = a.data.data() + static_cast<size_t>(i) * k;
    T* crow = c.data.data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* brow = b.data.data() + static_cast<size_t>(j) * k;
      T acc = T(0);
      for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] = acc;
    }
  }
  return c;
}

// a[k,m]^T * b[k,n] -> [m,n]
template <typename T>
TensorT<T> matmul_tn_raw(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape[0] != b.shape[0])
    throw DimensionError("matmul_tn: inner extents " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
  const int k = a.shape[0], m = a.shape[1], n = b.shape[1];
  TensorT<T> c({m, n});
  for (int kk = 0; kk < k; ++kk) {
    const T* arow = a.data.data() + static_cast<size_t>(kk) * m;
    const T* brow = b.data.data() + static_cast<size_t>(kk) * n;
    for (int i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c.data.data() + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

template <typename T>
TensorT<T> softmax_rows_raw(const TensorT<T>& x) {
  x.require_rank(2);
  const int m = x.shape[0], n = x.shape[1];
  if (n < 1) throw DimensionError("softmax_rows: empty rows");
  TensorT<T> y({m, n});
  for (int i = 0; i < m; ++i) {
    const T* xr = x.data.data() + static_cast<size_t>(i) * n;
    T* yr = y.data.data() + static_cast<size_t>(i) * n;
    T mx = xr[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    T sum = T(0);
    for (int j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    const T inv = T(1) / sum;
    for (int j = 0; j < n; ++j) yr[j] *= inv;
  }
  return y;
}

template <typename T>
TensorT<T> pairwise_sqdist_raw(const TensorT<T>& q, const TensorT<T>& k) {
  q.require_rank(2);
  k.require_rank(2);
  if (q.shape[1] != k.shape[1])
    throw DimensionError("pairwise_sqdist: feature extents " + shape_str(q.shape) + " vs " +
                         shape_str(k.shape));
  const int m = q.shape[0], n = k.shape[0], c = q.shape[1];
  TensorT<T> d({m, n});
  for (int p = 0; p < m; ++p) {
    const T* qr = q.data.data() + static_cast<size_t>(p) * c;
    T* dr = d.data.data() + static_cast<size_t>(p) * n;
    for (int j = 0; j < n; ++j) {
      const T* kr = k.data.data() + static_cast<size_t>(j) * c;
      T acc = T(0);
      for (int cc = 0; cc < c; ++cc) {
        const T diff = qr[cc] - kr[cc];
        acc += diff * diff;
      }
      dr[j] = acc;
    }
  }
  return d;
}

struct ConvGeom {
  int h, w, cin, kh, kw, cout, stride, pad, oh, ow;
};

template <typename T>
ConvGeom conv_geom(const TensorT<T>& x, const TensorT<T>& kernel, int stride, int pad) {
  x.require_rank(3);
  kernel.require_rank(4);
  ConvGeom g;
  g.h = x.shape[0];
  g.w = x.shape[1];
  g.cin = x.shape[2];
  g.kh = kernel.shape[0];
  g.kw = kernel.shape[1];
  g.cout = kernel.shape[3];
  g.stride = stride;
  g.pad = pad;
  if (kernel.shape[2] != g.cin)
    throw DimensionError("conv2d: kernel cin " + std::to_string(kernel.shape[2]) +
                         " vs input cin " + std::to_string(g.cin));
  if (g.kh % 2 == 0 || g.kw % 2 == 0) throw DimensionError("conv2d: kernel extents must be odd");
  if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  const int ny = g.h + 2 * pad - g.kh;
  const int nx = g.w + 2 * pad - g.kw;
  if (ny < 0 || nx < 0 || ny % stride != 0 || nx % stride != 0)
    throw DimensionError("conv2d: non-integral output extent for input " + shape_str(x.shape));
  g.oh = ny / stride + 1;
  g.ow = nx / stride + 1;
  return g;
}

// im2col: rows = output pixels, cols = kh*kw*cin patch values (zero padded).
template <typename T>
TensorT<T> im2col(const TensorT<T>& x, const ConvGeom& g) {
  TensorT<T> cols({g.oh * g.ow, g.kh * g.kw * g.cin});
  T* out = cols.data.data();
  for (int oy = 0; oy < g.oh; ++oy) {
    for (int ox = 0; ox < g.ow; ++ox) {
      T* row = out + (static_cast<size_t>(oy) * g.ow + ox) * (g.kh * g.kw * g.cin);
      for (int ky = 0; ky < g.kh; ++ky) {
        const int y = oy * g.stride + ky - g.pad;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int xx = ox * g.stride + kx - g.pad;
          T* dst = row + (static_cast<size_t>(ky) * g.kw + kx) * g.cin;
          if (y < 0 || y >= g.h || xx < 0 || xx >= g.w) {
            for (int c = 0; c < g.cin; ++c) dst[c] = T(0);
          } else {
            const T* src = x.data.data() + (static_cast<size_t>(y) * g.w + xx) * g.cin;
            for (int c = 0; c < g.cin; ++c) dst[c] = src[c];
          }
        }
      }
    }
  }
  return cols;
}

template <typename T>
void col2im_accum(const TensorT<T>& cols, const ConvGeom& g, TensorT<T>& gx) {
  for (int oy = 0; oy < g.oh; ++oy) {
    for (int ox = 0; ox < g.ow; ++ox) {
      const T* row =
          cols.data.data() + (static_cast<size_t>(oy) * g.ow + ox) * (g.kh * g.kw * g.cin);
      for (int ky = 0; ky < g.kh; ++ky) {
        const int y = oy * g.stride + ky - g.pad;
        if (y < 0 || y >= g.h) continue;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int xx = ox * g.stride + kx - g.pad;
          if (xx < 0 || xx >= g.w) continue;
          const T* src = row + (static_cast<size_t>(ky) * g.kw + kx) * g.cin;
          T* dst = gx.data.data() + (static_cast<size_t>(y) * g.w + xx) * g.cin;
          for (int c = 0; c < g.cin; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

template <typename T>
TensorT<T> conv2d_raw(const TensorT<T>& x, const TensorT<T>& kernel, const TensorT<T>& bias,
                      int stride, int pad) {
  const ConvGeom g = conv_geom(x, kernel, stride, pad);
  bias.require_rank(1);
  if (bias.shape[0] != g.cout) throw DimensionError("conv2d: bias extent vs cout");
  TensorT<T> cols = im2col(x, g);
  TensorT<T> wmat = kernel.reshaped({g.kh * g.kw * g.cin, g.cout});
  TensorT<T> y = matmul_raw(cols, wmat);
  for (int p = 0; p < g.oh * g.ow; ++p) {
    T* row = y.data.data() + static_cast<size_t>(p) * g.cout;
    for (int c = 0; c < g.cout; ++c) row[c] += bias.data[static_cast<size_t>(c)];
  }
  return y.reshaped({g.oh, g.ow, g.cout});
}

struct BilinearTap {
  int y0, y1, x0, x1;
  double wy, wx;
};

inline BilinearTap bilinear_tap(int y, int x, int h, int w, int factor) {
  BilinearTap t;
  double sy = (y + 0.5) / factor - 0.5;
  double sx = (x + 0.5) / factor - 0.5;
  if (sy < 0) sy = 0;
  if (sx < 0) sx = 0;
  t.y0 = static_cast<int>(sy);
  t.x0 = static_cast<int>(sx);
  if (t.y0 > h - 1) t.y0 = h - 1;
  if (t.x0 > w - 1) t.x0 = w - 1;
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.wy = sy - t.y0;
  t.wx = sx - t.x0;
  return t;
}

template <typename T>
TensorT<T> bilinear_upsample_raw(const TensorT<T>& x, int factor) {
  x.require_rank(3);
  if (factor != 2 && factor != 4) throw DimensionError("bilinear_upsample: factor must be 2 or 4");
  const int h = x.shape[0], w = x.shape[1], c = x.shape[2];
  TensorT<T> y({h * factor, w * factor, c});
  for (int oy = 0; oy < h * factor; ++oy) {
    for (int ox = 0; ox < w * factor; ++ox) {
      const BilinearTap t = bilinear_tap(oy, ox, h, w, factor);
      T* dst = y.data.data() + (static_cast<size_t>(oy) * w * factor + ox) * c;
      const T* a = x.data.data() + (static_cast<size_t>(t.y0) * w + t.x0) * c;
      const T* b = x.data.data() + (static_cast<size_t>(t.y0) * w + t.x1) * c;
      const T* d = x.data.data() + (static_cast<size_t>(t.y1) * w + t.x0) * c;
      const T* e = x.data.data() + (static_cast<size_t>(t.y1) * w + t.x1) * c;
      const T w00 = static_cast<T>((1 - t.wy) * (1 - t.wx));
      const T w01 = static_cast<T>((1 - t.wy) * t.wx);
      const T w10 = static_cast<T>(t.wy * (1 - t.wx));
      const T w11 = static_cast<T>(t.wy * t.wx);
      for (int cc = 0; cc < c; ++cc) dst[cc] = w00 * a[cc] + w01 * b[cc] + w10 * d[cc] + w11 * e[cc];
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// Tape ops. Each returns the id of a new node whose backward closure
// accumulates into its parents' gradients.
// ---------------------------------------------------------------------------

template <typename T>
void accum(TensorT<T>& dst, const TensorT<T>& src) {
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

template <typename T>
int matmul(Tape<T>& tp, int a, int b) {
  TensorT<T> y = matmul_raw(tp.val(a), tp.val(b));
  return tp.node(std::move(y), [a, b](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    accum(t.grad(a), matmul_nt_raw(g, t.val(b)));
    accum(t.grad(b), matmul_tn_raw(t.val(a), g));
  });
}

template <typename T>
int transpose(Tape<T>& tp, int a) {
  const TensorT<T>& x = tp.val(a);
  x.require_rank(2);
  const int m = x.shape[0], n = x.shape[1];
  TensorT<T> y({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) y(j, i) = x(i, j);
  return tp.node(std::move(y), [a, m, n](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    TensorT<T>& ga = t.grad(a);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ga(i, j) += g(j, i);
  });
}

template <typename T>
int softmax_rows(Tape<T>& tp, int x) {
  TensorT<T> y = softmax_rows_raw(tp.val(x));
  return tp.node(std::move(y), [x](Tape<T>& t, int self) {
    const TensorT<T>& y_ = t.val(self);
    const TensorT<T>& g = t.grad(self);
    TensorT<T>& gx = t.grad(x);
    const int m = y_.shape[0], n = y_.shape[1];
    for (int i = 0; i < m; ++i) {
      T dot = T(0);
      for (int j = 0; j < n; ++j) dot += g(i, j) * y_(i, j);
      for (int j = 0; j < n; ++j) gx(i, j) += y_(i, j) * (g(i, j) - dot);
    }
  });
}

template <typename T>
int pairwise_sqdist(Tape<T>& tp, int q, int k) {
  TensorT<T> d = pairwise_sqdist_raw(tp.val(q), tp.val(k));
  return tp.node(std::move(d), [q, k](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    const TensorT<T>& Q = t.val(q);
    const TensorT<T>& K = t.val(k);
    TensorT<T>& gq = t.grad(q);
    TensorT<T>& gk = t.grad(k);
    const int m = Q.shape[0], n = K.shape[0], c = Q.shape[1];
    for (int p = 0; p < m; ++p) {
      for (int j = 0; j < n; ++j) {
        const T gv = g(p, j);
        if (gv == T(0)) continue;
        for (int cc = 0; cc < c; ++cc) {
          const T diff = T(2) * (Q(p, cc) - K(j, cc));
          gq(p, cc) += gv * diff;
          gk(j, cc) -= gv * diff;
        }
      }
    }
  });
}

template <typename T>
int linear(Tape<T>& tp, int x, int w, int b) {
  const TensorT<T>& X = tp.val(x);
  const TensorT<T>& W = tp.val(w);
  const TensorT<T>& B = tp.val(b);
  B.require_rank(1);
  if (W.rank() != 2 || X.rank() != 2 || X.shape[1] != W.shape[0] || B.shape[0] != W.shape[1])
    throw DimensionError("linear: " + shape_str(X.shape) + " * " + shape_str(W.shape) + " + " +
                         shape_str(B.shape));
  TensorT<T> y = matmul_raw(X, W);
  const int m = y.shape[0], n = y.shape[1];
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) y(i, j) += B.data[static_cast<size_t>(j)];
  return tp.node(std::move(y), [x, w, b](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    accum(t.grad(x), matmul_nt_raw(g, t.val(w)));
    accum(t.grad(w), matmul_tn_raw(t.val(x), g));
    TensorT<T>& gb = t.grad(b);
    const int m_ = g.shape[0], n_ = g.shape[1];
    for (int i = 0; i < m_; ++i)
      for (int j = 0; j < n_; ++j) gb.data[static_cast<size_t>(j)] += g(i, j);
  });
}

template <typename T>
int conv2d(Tape<T>& tp, int x, int kernel, int bias, int stride, int pad) {
  const TensorT<T>& X = tp.val(x);
  const TensorT<T>& K = tp.val(kernel);
  TensorT<T> y = conv2d_raw(X, K, tp.val(bias), stride, pad);
  const ConvGeom g = conv_geom(X, K, stride, pad);
  return tp.node(std::move(y), [x, kernel, bias, g](Tape<T>& t, int self) {
    const TensorT<T> gy = t.grad(self).reshaped({g.oh * g.ow, g.cout});
    const TensorT<T> cols = im2col(t.val(x), g);
    const TensorT<T> wmat = t.val(kernel).reshaped({g.kh * g.kw * g.cin, g.cout});
    TensorT<T> gw = matmul_tn_raw(cols, gy);
    accum(t.grad(kernel), gw.reshaped({g.kh, g.kw, g.cin, g.cout}));
    TensorT<T> gcols = matmul_nt_raw(gy, wmat);
    col2im_accum(gcols, g, t.grad(x));
    TensorT<T>& gb = t.grad(bias);
    for (int p = 0; p < g.oh * g.ow; ++p)
      for (int c = 0; c < g.cout; ++c) gb.data[static_cast<size_t>(c)] += gy(p, c);
  });
}

template <typename T>
int relu(Tape<T>& tp, int x) {
  TensorT<T> y = tp.val(x);
  for (auto& v : y.data) v = v > T(0) ? v : T(0);
  return tp.node(std::move(y), [x](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    const TensorT<T>& X = t.val(x);
    TensorT<T>& gx = t.grad(x);
    for (size_t i = 0; i < g.data.size(); ++i)
      if (X.data[i] > T(0)) gx.data[i] += g.data[i];
  });
}

template <typename T>
int sigmoid(Tape<T>& tp, int x) {
  TensorT<T> y = tp.val(x);
  for (auto& v : y.data) v = T(1) / (T(1) + std::exp(-v));
  return tp.node(std::move(y), [x](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    const TensorT<T>& Y = t.val(self);
    TensorT<T>& gx = t.grad(x);
    for (size_t i = 0; i < g.data.size(); ++i)
      gx.data[i] += g.data[i] * Y.data[i] * (T(1) - Y.data[i]);
  });
}

template <typename T>
int add(Tape<T>& tp, int a, int b) {
  const TensorT<T>& A = tp.val(a);
  const TensorT<T>& B = tp.val(b);
  require_same_shape(A, B, "add");
  TensorT<T> y = A;
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += B.data[i];
  return tp.node(std::move(y), [a, b](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    accum(t.grad(a), g);
    accum(t.grad(b), g);
  });
}

template <typename T>
int sub(Tape<T>& tp, int a, int b) {
  const TensorT<T>& A = tp.val(a);
  const TensorT<T>& B = tp.val(b);
  require_same_shape(A, B, "sub");
  TensorT<T> y = A;
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] -= B.data[i];
  return tp.node(std::move(y), [a, b](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    accum(t.grad(a), g);
    TensorT<T>& gb = t.grad(b);
    for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] -= g.data[i];
  });
}

template <typename T>
int mul(Tape<T>& tp, int a, int b) {
  const TensorT<T>& A = tp.val(a);
  const TensorT<T>& B = tp.val(b);
  require_same_shape(A, B, "mul");
  TensorT<T> y = A;
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] *= B.data[i];
  return tp.node(std::move(y), [a, b](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    const TensorT<T>& A_ = t.val(a);
    const TensorT<T>& B_ = t.val(b);
    TensorT<T>& ga = t.grad(a);
    TensorT<T>& gb = t.grad(b);
    for (size_t i = 0; i < g.data.size(); ++i) {
      ga.data[i] += g.data[i] * B_.data[i];
      gb.data[i] += g.data[i] * A_.data[i];
    }
  });
}

template <typename T>
int scale(Tape<T>& tp, int a, T s) {
  TensorT<T> y = tp.val(a);
  for (auto& v : y.data) v *= s;
  return tp.node(std::move(y), [a, s](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    TensorT<T>& ga = t.grad(a);
    for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * s;
  });
}

// y = alpha * x + beta with constant scalars
template <typename T>
int affine_const(Tape<T>& tp, int a, T alpha, T beta) {
  TensorT<T> y = tp.val(a);
  for (auto& v : y.data) v = alpha * v + beta;
  return tp.node(std::move(y), [a, alpha](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    TensorT<T>& ga = t.grad(a);
    for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * alpha;
  });
}

// Concatenate along the last (channel) dimension; rank 2 or 3, other extents equal.
template <typename T>
int concat_channels(Tape<T>& tp, int a, int b) {
  const TensorT<T>& A = tp.val(a);
  const TensorT<T>& B = tp.val(b);
  if (A.rank() != B.rank() || (A.rank() != 2 && A.rank() != 3))
    throw DimensionError("concat_channels: ranks " + shape_str(A.shape) + " vs " +
                         shape_str(B.shape));
  for (int i = 0; i + 1 < A.rank(); ++i)
    if (A.shape[i] != B.shape[i])
      throw DimensionError("concat_channels: leading extents " + shape_str(A.shape) + " vs " +
                           shape_str(B.shape));
  const int ca = A.shape.back(), cb = B.shape.back();
  std::vector<int> oshape = A.shape;
  oshape.back() = ca + cb;
  const size_t rows = A.numel() / ca;
  TensorT<T> y(oshape);
  for (size_t r = 0; r < rows; ++r) {
    T* dst = y.data.data() + r * (ca + cb);
    const T* pa = A.data.data() + r * ca;
    const T* pb = B.data.data() + r * cb;
    std::copy(pa, pa + ca, dst);
    std::copy(pb, pb + cb, dst + ca);
  }
  return tp.node(std::move(y), [a, b, ca, cb, rows](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    TensorT<T>& ga = t.grad(a);
    TensorT<T>& gb = t.grad(b);
    for (size_t r = 0; r < rows; ++r) {
      const T* src = g.data.data() + r * (ca + cb);
      for (int c = 0; c < ca; ++c) ga.data[r * ca + c] += src[c];
      for (int c = 0; c < cb; ++c) gb.data[r * cb + c] += src[ca + c];
    }
  });
}

template <typename T>
int bilinear_upsample(Tape<T>& tp, int x, int factor) {
  const TensorT<T>& X = tp.val(x);
  TensorT<T> y = bilinear_upsample_raw(X, factor);
  const int h = X.shape[0], w = X.shape[1], c = X.shape[2];
  return tp.node(std::move(y), [x, h, w, c, factor](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    TensorT<T>& gx = t.grad(x);
    for (int oy = 0; oy < h * factor; ++oy) {
      for (int ox = 0; ox < w * factor; ++ox) {
        const BilinearTap tap = bilinear_tap(oy, ox, h, w, factor);
        const T* gsrc = g.data.data() + (static_cast<size_t>(oy) * w * factor + ox) * c;
        const T w00 = static_cast<T>((1 - tap.wy) * (1 - tap.wx));
        const T w01 = static_cast<T>((1 - tap.wy) * tap.wx);
        const T w10 = static_cast<T>(tap.wy * (1 - tap.wx));
        const T w11 = static_cast<T>(tap.wy * tap.wx);
        for (int cc = 0; cc < c; ++cc) {
          gx.data[(static_cast<size_t>(tap.y0) * w + tap.x0) * c + cc] += w00 * gsrc[cc];
          gx.data[(static_cast<size_t>(tap.y0) * w + tap.x1) * c + cc] += w01 * gsrc[cc];
          gx.data[(static_cast<size_t>(tap.y1) * w + tap.x0) * c + cc] += w10 * gsrc[cc];
          gx.data[(static_cast<size_t>(tap.y1) * w + tap.x1) * c + cc] += w11 * gsrc[cc];
        }
      }
    }
  });
}

// 2x2 mean pooling, the encoder's downsampling step (a stride-2 odd-kernel
// conv cannot produce integral extents on even inputs).
template <typename T>
int avgpool2x2(Tape<T>& tp, int x) {
  const TensorT<T>& X = tp.val(x);
  X.require_rank(3);
  const int h = X.shape[0], w = X.shape[1], c = X.shape[2];
  if (h % 2 != 0 || w % 2 != 0)
    throw DimensionError("avgpool2x2: extents must be even, got " + shape_str(X.shape));
  TensorT<T> y({h / 2, w / 2, c});
  for (int oy = 0; oy < h / 2; ++oy)
    for (int ox = 0; ox < w / 2; ++ox)
      for (int cc = 0; cc < c; ++cc)
        y(oy, ox, cc) = (X(2 * oy, 2 * ox, cc) + X(2 * oy, 2 * ox + 1, cc) +
                         X(2 * oy + 1, 2 * ox, cc) + X(2 * oy + 1, 2 * ox + 1, cc)) *
                        T(0.25);
  return tp.node(std::move(y), [x, h, w, c](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    TensorT<T>& gx = t.grad(x);
    for (int oy = 0; oy < h / 2; ++oy)
      for (int ox = 0; ox < w / 2; ++ox)
        for (int cc = 0; cc < c; ++cc) {
          const T gv = g(oy, ox, cc) * T(0.25);
          gx(2 * oy, 2 * ox, cc) += gv;
          gx(2 * oy, 2 * ox + 1, cc) += gv;
          gx(2 * oy + 1, 2 * ox, cc) += gv;
          gx(2 * oy + 1, 2 * ox + 1, cc) += gv;
        }
  });
}

template <typename T>
int reshape(Tape<T>& tp, int x, std::vector<int> shape) {
  TensorT<T> y = tp.val(x).reshaped(shape);
  return tp.node(std::move(y), [x](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    TensorT<T>& gx = t.grad(x);
    for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
  });
}

// Column slice [lo, hi) of a rank-2 tensor.
template <typename T>
int slice_cols(Tape<T>& tp, int x, int lo, int hi) {
  const TensorT<T>& X = tp.val(x);
  X.require_rank(2);
  const int m = X.shape[0], n = X.shape[1];
  if (lo < 0 || hi > n || lo >= hi) throw DimensionError("slice_cols: bad range");
  TensorT<T> y({m, hi - lo});
  for (int i = 0; i < m; ++i)
    for (int j = lo; j < hi; ++j) y(i, j - lo) = X(i, j);
  return tp.node(std::move(y), [x, lo, hi, m](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    TensorT<T>& gx = t.grad(x);
    for (int i = 0; i < m; ++i)
      for (int j = lo; j < hi; ++j) gx(i, j) += g(i, j - lo);
  });
}

// [m,n] -> [m,1] row sums
template <typename T>
int sum_cols(Tape<T>& tp, int x) {
  const TensorT<T>& X = tp.val(x);
  X.require_rank(2);
  const int m = X.shape[0], n = X.shape[1];
  TensorT<T> y({m, 1});
  for (int i = 0; i < m; ++i) {
    T acc = T(0);
    for (int j = 0; j < n; ++j) acc += X(i, j);
    y(i, 0) = acc;
  }
  return tp.node(std::move(y), [x, m, n](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    TensorT<T>& gx = t.grad(x);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) gx(i, j) += g(i, 0);
  });
}

// [m,n] -> [1,n] column means (GAP over tokens)
template <typename T>
int mean_rows(Tape<T>& tp, int x) {
  const TensorT<T>& X = tp.val(x);
  X.require_rank(2);
  const int m = X.shape[0], n = X.shape[1];
  TensorT<T> y({1, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) y(0, j) += X(i, j);
  for (int j = 0; j < n; ++j) y(0, j) /= static_cast<T>(m);
  return tp.node(std::move(y), [x, m, n](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    TensorT<T>& gx = t.grad(x);
    const T inv = T(1) / static_cast<T>(m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) gx(i, j) += g(0, j) * inv;
  });
}

template <typename T>
int sum_all(Tape<T>& tp, int x) {
  const TensorT<T>& X = tp.val(x);
  T acc = T(0);
  for (const T v : X.data) acc += v;
  return tp.node(TensorT<T>::scalar(acc), [x](Tape<T>& t, int self) {
    const T g = t.grad(self).data[0];
    TensorT<T>& gx = t.grad(x);
    for (auto& v : gx.data) v += g;
  });
}

template <typename T>
int mean_all(Tape<T>& tp, int x) {
  const TensorT<T>& X = tp.val(x);
  const size_t n = X.numel();
  T acc = T(0);
  for (const T v : X.data) acc += v;
  acc /= static_cast<T>(n);
  return tp.node(TensorT<T>::scalar(acc), [x, n](Tape<T>& t, int self) {
    const T g = t.grad(self).data[0] / static_cast<T>(n);
    TensorT<T>& gx = t.grad(x);
    for (auto& v : gx.data) v += g;
  });
}

// x[m,n] * w[m,1], the per-row broadcast used by routing-map fusion.
template <typename T>
int mul_bcast_col(Tape<T>& tp, int x, int w) {
  const TensorT<T>& X = tp.val(x);
  const TensorT<T>& W = tp.val(w);
  X.require_rank(2);
  W.require_rank(2);
  if (W.shape[0] != X.shape[0] || W.shape[1] != 1)
    throw DimensionError("mul_bcast_col: " + shape_str(X.shape) + " vs " + shape_str(W.shape));
  const int m = X.shape[0], n = X.shape[1];
  TensorT<T> y({m, n});
  for (int i = 0; i < m; ++i) {
    const T wv = W(i, 0);
    for (int j = 0; j < n; ++j) y(i, j) = X(i, j) * wv;
  }
  return tp.node(std::move(y), [x, w, m, n](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    const TensorT<T>& X_ = t.val(x);
    const TensorT<T>& W_ = t.val(w);
    TensorT<T>& gx = t.grad(x);
    TensorT<T>& gw = t.grad(w);
    for (int i = 0; i < m; ++i) {
      const T wv = W_(i, 0);
      T acc = T(0);
      for (int j = 0; j < n; ++j) {
        gx(i, j) += g(i, j) * wv;
        acc += g(i, j) * X_(i, j);
      }
      gw(i, 0) += acc;
    }
  });
}

// Stack rows of two rank-2 tensors with equal column counts.
template <typename T>
int concat_rows(Tape<T>& tp, int a, int b) {
  const TensorT<T>& A = tp.val(a);
  const TensorT<T>& B = tp.val(b);
  A.require_rank(2);
  B.require_rank(2);
  if (A.shape[1] != B.shape[1])
    throw DimensionError("concat_rows: column mismatch " + shape_str(A.shape) + " vs " +
                         shape_str(B.shape));
  const int ma = A.shape[0], mb = B.shape[0], n = A.shape[1];
  TensorT<T> y({ma + mb, n});
  std::copy(A.data.begin(), A.data.end(), y.data.begin());
  std::copy(B.data.begin(), B.data.end(), y.data.begin() + A.data.size());
  return tp.node(std::move(y), [a, b, ma, mb, n](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    TensorT<T>& ga = t.grad(a);
    TensorT<T>& gb = t.grad(b);
    const size_t na = static_cast<size_t>(ma) * n;
    for (size_t i = 0; i < na; ++i) ga.data[i] += g.data[i];
    for (size_t i = 0; i < static_cast<size_t>(mb) * n; ++i) gb.data[i] += g.data[na + i];
  });
}

// y = x * a + b with learnable scalars a, b of shape [1].
template <typename T>
int scalar_affine(Tape<T>& tp, int x, int a, int b) {
  const TensorT<T>& X = tp.val(x);
  const T av = tp.val(a).data.at(0);
  const T bv = tp.val(b).data.at(0);
  TensorT<T> y = X;
  for (auto& v : y.data) v = v * av + bv;
  return tp.node(std::move(y), [x, a, b](Tape<T>& t, int self) {
    const TensorT<T>& g = t.grad(self);
    const TensorT<T>& X_ = t.val(x);
    const T av = t.val(a).data[0];
    TensorT<T>& gx = t.grad(x);
    T ga = T(0), gb = T(0);
    for (size_t i = 0; i < g.data.size(); ++i) {
      gx.data[i] += g.data[i] * av;
      ga += g.data[i] * X_.data[i];
      gb += g.data[i];
    }
    t.grad(a).data[0] += ga;
    t.grad(b).data[0] += gb;
  });
}

}  // namespace tsn
