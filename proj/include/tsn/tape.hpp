#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "tsn/tensor.hpp"

namespace tsn {

// Reverse-mode tape. Forward ops append value nodes together with an explicit
// backward closure; backward() replays the closures in reverse order.
// Gradients are allocated lazily, so subgraphs that do not reach the loss
// keep exactly-zero gradients and their closures are skipped.
template <typename T>
class Tape {
 public:
  using BackFn = std::function<void(Tape&, int self)>;

  int leaf(TensorT<T> v) {
    vals_.push_back(std::move(v));
    backs_.emplace_back();
    return static_cast<int>(vals_.size()) - 1;
  }

  int node(TensorT<T> v, BackFn back) {
    vals_.push_back(std::move(v));
    backs_.push_back(std::move(back));
    return static_cast<int>(vals_.size()) - 1;
  }

  const TensorT<T>& val(int id) const { return vals_[static_cast<size_t>(id)]; }

  // Gradient tensor for a node; allocates zeros on first touch.
  TensorT<T>& grad(int id) {
    grads_.resize(vals_.size());
    auto& g = grads_[static_cast<size_t>(id)];
    if (g.data.empty()) g = TensorT<T>::zeros(vals_[static_cast<size_t>(id)].shape);
    return g;
  }

  bool has_grad(int id) const {
    return static_cast<size_t>(id) < grads_.size() && !grads_[static_cast<size_t>(id)].data.empty();
  }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape backwards. The seed node
  // must be scalar.
  void backward(int loss_id) {
    const auto& l = val(loss_id);
    if (l.numel() != 1) throw DimensionError("backward seed must be a scalar node");
    grad(loss_id).data[0] = T(1);
    for (int i = loss_id; i >= 0; --i) {
      if (!backs_[static_cast<size_t>(i)]) continue;
      if (!has_grad(i)) continue;  // node never contributed to the loss
      backs_[static_cast<size_t>(i)](*this, i);
    }
  }

  size_t size() const { return vals_.size(); }

 private:
  std::vector<TensorT<T>> vals_;
  std::vector<TensorT<T>> grads_;
  std::vector<BackFn> backs_;
};

}  // namespace tsn
