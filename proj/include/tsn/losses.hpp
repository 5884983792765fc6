#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "tsn/ops.hpp"

namespace tsn {

namespace detail {

template <typename T>
T stable_bce(T logit, T target) {
  // max(l,0) - l*g + log(1 + exp(-|l|))
  const T pos = logit > T(0) ? logit : T(0);
  const T absl = logit > T(0) ? logit : -logit;
  return pos - logit * target + std::log1p(std::exp(-absl));
}

}  // namespace detail

// Bootstrapped binary cross-entropy on logits: mean over the ceil(frac*n)
// highest-loss pixels. Ties break toward the lower index so the selection is
// reproducible.
template <typename T>
int bce_bootstrap(Tape<T>& tp, int logits, int target, double frac) {
  const TensorT<T>& l = tp.val(logits);
  const TensorT<T>& g = tp.val(target);
  require_same_shape(l, g, "bce_bootstrap");
  if (frac <= 0.0 || frac > 1.0) throw Error("bce_bootstrap: frac must be in (0, 1]");
  const size_t n = l.numel();
  const size_t keep = static_cast<size_t>(std::ceil(frac * static_cast<double>(n)));

  std::vector<T> ce(n);
  for (size_t i = 0; i < n; ++i) ce[i] = detail::stable_bce(l.data[i], g.data[i]);

  std::vector<uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  if (keep < n) {
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(keep), idx.end(),
                      [&ce](uint32_t a, uint32_t b) {
                        if (ce[a] != ce[b]) return ce[a] > ce[b];
                        return a < b;
                      });
    idx.resize(keep);
  }

  T acc = T(0);
  for (uint32_t i : idx) acc += ce[i];
  acc /= static_cast<T>(keep);

  auto selected = std::make_shared<std::vector<uint32_t>>(std::move(idx));
  return tp.node(TensorT<T>::scalar(acc), [logits, target, selected, keep](Tape<T>& t, int self) {
    const T gout = t.grad(self).data[0];
    const TensorT<T>& l_ = t.val(logits);
    const TensorT<T>& g_ = t.val(target);
    TensorT<T>& gl = t.grad(logits);
    TensorT<T>& gg = t.grad(target);
    const T inv = gout / static_cast<T>(keep);
    for (uint32_t i : *selected) {
      const T sig = T(1) / (T(1) + std::exp(-l_.data[i]));
      gl.data[i] += inv * (sig - g_.data[i]);
      gg.data[i] += inv * (-l_.data[i]);
    }
  });
}

// Mask IoU loss 1 - sum(min(P,G)) / sum(max(P,G)) over probabilities.
// Both-empty input is defined as zero loss.
template <typename T>
int miou_loss(Tape<T>& tp, int prob, int target) {
  const TensorT<T>& p = tp.val(prob);
  const TensorT<T>& g = tp.val(target);
  require_same_shape(p, g, "miou_loss");
  T smin = T(0), smax = T(0);
  for (size_t i = 0; i < p.numel(); ++i) {
    smin += std::min(p.data[i], g.data[i]);
    smax += std::max(p.data[i], g.data[i]);
  }
  const bool empty = smax == T(0);
  const T loss = empty ? T(0) : T(1) - smin / smax;
  return tp.node(TensorT<T>::scalar(loss), [prob, target, smin, smax, empty](Tape<T>& t,
                                                                             int self) {
    if (empty) return;
    const T gout = t.grad(self).data[0];
    const TensorT<T>& p_ = t.val(prob);
    const TensorT<T>& g_ = t.val(target);
    TensorT<T>& gp = t.grad(prob);
    TensorT<T>& gg = t.grad(target);
    // d(1 - smin/smax) = -(dmin*smax - smin*dmax)/smax^2
    const T inv2 = gout / (smax * smax);
    for (size_t i = 0; i < p_.numel(); ++i) {
      const bool p_is_min = p_.data[i] <= g_.data[i];
      const T dp_min = p_is_min ? T(1) : T(0);
      const T dp_max = p_is_min ? T(0) : T(1);
      gp.data[i] += -(dp_min * smax - smin * dp_max) * inv2;
      const T dg_min = p_is_min ? T(0) : T(1);
      const T dg_max = p_is_min ? T(1) : T(0);
      gg.data[i] += -(dg_min * smax - smin * dg_max) * inv2;
    }
  });
}

// Warmup-then-anneal schedule for the bootstrap fraction: 1.0 for the first
// warm fraction of training, then linear to the final fraction.
inline double bootstrap_frac(int iteration, int total, double warm, double final_frac) {
  if (total <= 1) return final_frac;
  const double warm_end = warm * total;
  if (iteration < warm_end) return 1.0;
  const double t = (iteration - warm_end) / (total - 1 - warm_end);
  return 1.0 + (final_frac - 1.0) * std::min(1.0, std::max(0.0, t));
}

}  // namespace tsn
