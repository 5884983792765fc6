#pragma once

// Independent reference implementations used only by tests. These are kept
// deliberately naive (triple loops, direct formulas) and must not call into
// the library kernels they check.

#include <algorithm>
#include <cmath>
#include <vector>

#include "tsn/tensor.hpp"

namespace oracle {

using tsn::Tensor64;

inline Tensor64 matmul_naive(const Tensor64& a, const Tensor64& b) {
  const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor64 c({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int kk = 0; kk < k; ++kk) acc += a(i, kk) * b(kk, j);
      c(i, j) = acc;
    }
  return c;
}

inline Tensor64 softmax_direct(const Tensor64& x) {
  const int m = x.shape[0], n = x.shape[1];
  Tensor64 y({m, n});
  for (int i = 0; i < m; ++i) {
    double sum = 0.0;
    for (int j = 0; j < n; ++j) sum += std::exp(x(i, j));
    for (int j = 0; j < n; ++j) y(i, j) = std::exp(x(i, j)) / sum;
  }
  return y;
}

// ||q||^2 - 2 q.k + ||k||^2
inline Tensor64 sqdist_expansion(const Tensor64& q, const Tensor64& k) {
  const int m = q.shape[0], n = k.shape[0], c = q.shape[1];
  Tensor64 d({m, n});
  for (int i = 0; i < m; ++i) {
    double qn = 0.0;
    for (int cc = 0; cc < c; ++cc) qn += q(i, cc) * q(i, cc);
    for (int j = 0; j < n; ++j) {
      double kn = 0.0, dot = 0.0;
      for (int cc = 0; cc < c; ++cc) {
        kn += k(j, cc) * k(j, cc);
        dot += q(i, cc) * k(j, cc);
      }
      d(i, j) = qn - 2.0 * dot + kn;
    }
  }
  return d;
}

// direct double loop over Eq on affinity: softmax over memory of -||kq - km||^2
inline Tensor64 affinity_direct(const Tensor64& kq, const Tensor64& km) {
  const int m = kq.shape[0], n = km.shape[0], c = kq.shape[1];
  Tensor64 a({m, n});
  for (int p = 0; p < m; ++p) {
    std::vector<double> sim(n);
    for (int q = 0; q < n; ++q) {
      double d = 0.0;
      for (int cc = 0; cc < c; ++cc) {
        const double diff = kq(p, cc) - km(q, cc);
        d += diff * diff;
      }
      sim[static_cast<size_t>(q)] = -d;
    }
    double denom = 0.0;
    for (int q = 0; q < n; ++q) denom += std::exp(sim[static_cast<size_t>(q)]);
    for (int q = 0; q < n; ++q) a(p, q) = std::exp(sim[static_cast<size_t>(q)]) / denom;
  }
  return a;
}

// weighted sum of memory rows with affinity weights
inline Tensor64 read_naive(const Tensor64& a, const Tensor64& v) {
  const int m = a.shape[0], n = a.shape[1], c = v.shape[1];
  Tensor64 r({m, c});
  for (int p = 0; p < m; ++p)
    for (int q = 0; q < n; ++q)
      for (int cc = 0; cc < c; ++cc) r(p, cc) += a(p, q) * v(q, cc);
  return r;
}

inline Tensor64 conv2d_sliding(const Tensor64& x, const Tensor64& k, const Tensor64& b, int stride,
                               int pad) {
  const int h = x.shape[0], w = x.shape[1], cin = x.shape[2];
  const int kh = k.shape[0], kw = k.shape[1], cout = k.shape[3];
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (w + 2 * pad - kw) / stride + 1;
  Tensor64 y({oh, ow, cout});
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (int co = 0; co < cout; ++co) {
        double acc = b.data[static_cast<size_t>(co)];
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx)
            for (int ci = 0; ci < cin; ++ci) {
              const int yy = oy * stride + ky - pad;
              const int xx = ox * stride + kx - pad;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              acc += x(yy, xx, ci) * k.data[((static_cast<size_t>(ky) * kw + kx) * cin + ci) * cout +
                                            co];
            }
        y(oy, ox, co) = acc;
      }
  return y;
}

// align-corners-false interpolation, written from the closed form
inline double bilinear_at(const Tensor64& x, int oy, int ox, int factor, int ch) {
  const int h = x.shape[0], w = x.shape[1];
  double sy = (oy + 0.5) / factor - 0.5;
  double sx = (ox + 0.5) / factor - 0.5;
  sy = std::max(0.0, sy);
  sx = std::max(0.0, sx);
  int y0 = std::min(static_cast<int>(sy), h - 1);
  int x0 = std::min(static_cast<int>(sx), w - 1);
  int y1 = std::min(y0 + 1, h - 1);
  int x1 = std::min(x0 + 1, w - 1);
  const double fy = sy - y0, fx = sx - x0;
  return (1 - fy) * ((1 - fx) * x(y0, x0, ch) + fx * x(y0, x1, ch)) +
         fy * ((1 - fx) * x(y1, x0, ch) + fx * x(y1, x1, ch));
}

// top-k read: exhaustive sort, renormalize over kept set, accumulate
struct TopkOracle {
  Tensor64 rv, rk;
};
inline TopkOracle topk_read(const Tensor64& kq, const Tensor64& km, const Tensor64& vm, int k) {
  const int m = kq.shape[0], n = km.shape[0];
  const int cv = vm.shape[1], ck = km.shape[1];
  TopkOracle out{Tensor64({m, cv}), Tensor64({m, ck})};
  for (int p = 0; p < m; ++p) {
    std::vector<std::pair<double, int>> sims;
    for (int q = 0; q < n; ++q) {
      double d = 0.0;
      for (int cc = 0; cc < ck; ++cc) {
        const double diff = kq(p, cc) - km(q, cc);
        d += diff * diff;
      }
      sims.push_back({-d, q});
    }
    std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    const int kept = std::min(k, n);
    double denom = 0.0;
    double mx = sims[0].first;
    for (int i = 0; i < kept; ++i) denom += std::exp(sims[static_cast<size_t>(i)].first - mx);
    for (int i = 0; i < kept; ++i) {
      const double wgt = std::exp(sims[static_cast<size_t>(i)].first - mx) / denom;
      const int q = sims[static_cast<size_t>(i)].second;
      for (int cc = 0; cc < cv; ++cc) out.rv(p, cc) += wgt * vm(q, cc);
      for (int cc = 0; cc < ck; ++cc) out.rk(p, cc) += wgt * km(q, cc);
    }
  }
  return out;
}

inline double max_abs_diff(const Tensor64& a, const Tensor64& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    worst = std::max(worst, std::fabs(a.data[i] - b.data[i]));
  return worst;
}

}  // namespace oracle
