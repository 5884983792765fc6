#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tsn/common.hpp"

namespace tsn {

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

inline size_t numel_of(const std::vector<int>& shape) {
  size_t n = 1;
  for (int e : shape) {
    if (e <= 0) throw DimensionError("non-positive extent in shape " + shape_str(shape));
    n *= static_cast<size_t>(e);
  }
  return n;
}

// Dense row-major tensor. No views or strides; reshape copies.
template <typename T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), T(0)) {}
  TensorT(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel_of(shape))
      throw DimensionError("data length does not match shape " + shape_str(shape));
  }

  static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }
  static TensorT full(std::vector<int> s, T v) {
    TensorT t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static TensorT scalar(T v) { return TensorT({1}, {v}); }
  static TensorT identity(int n) {
    TensorT t({n, n});
    for (int i = 0; i < n; ++i) t.data[static_cast<size_t>(i) * n + i] = T(1);
    return t;
  }

  int rank() const { return static_cast<int>(shape.size()); }
  size_t numel() const { return data.size(); }

  int rows() const {
    require_rank(2);
    return shape[0];
  }
  int cols() const {
    require_rank(2);
    return shape[1];
  }

  T& operator()(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
  T operator()(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }
  // rank-3 [h, w, c] access
  T& operator()(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * shape[1] + x) * shape[2] + c];
  }
  T operator()(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * shape[1] + x) * shape[2] + c];
  }

  void require_rank(int r) const {
    if (rank() != r)
      throw DimensionError("expected rank-" + std::to_string(r) + " tensor, got " +
                           shape_str(shape));
  }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  TensorT reshaped(std::vector<int> s) const {
    if (numel_of(s) != numel())
      throw DimensionError("reshape " + shape_str(shape) + " -> " + shape_str(s) +
                           " changes element count");
    return TensorT(std::move(s), data);
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

template <typename T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* what) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
}

}  // namespace tsn
