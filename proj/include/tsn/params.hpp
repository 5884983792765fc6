#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "tsn/tape.hpp"
#include "tsn/tensor.hpp"

namespace tsn {

// Ordered named parameter tensors. Order is the serialization and
// gradient-accumulation order, so it must be deterministic.
template <typename T>
struct ParamStore {
  std::vector<std::string> order;
  std::unordered_map<std::string, TensorT<T>> tensors;

  void add(const std::string& name, TensorT<T> t) {
    if (tensors.count(name)) throw Error("duplicate parameter: " + name);
    order.push_back(name);
    tensors.emplace(name, std::move(t));
  }

  TensorT<T>& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("unknown parameter: " + name);
    return it->second;
  }
  const TensorT<T>& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("unknown parameter: " + name);
    return it->second;
  }

  size_t scalar_count() const {
    size_t n = 0;
    for (const auto& name : order) n += tensors.at(name).numel();
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& name : order) out.add(name, tensors.at(name).template cast<U>());
    return out;
  }
};

// Parameter leaves pushed onto a tape for one forward/backward pass.
struct ParamVars {
  std::unordered_map<std::string, int> ids;

  int operator()(const std::string& name) const {
    auto it = ids.find(name);
    if (it == ids.end()) throw Error("parameter not on tape: " + name);
    return it->second;
  }
};

template <typename T>
ParamVars push_params(Tape<T>& tp, const ParamStore<T>& store) {
  ParamVars pv;
  for (const auto& name : store.order) pv.ids[name] = tp.leaf(store.tensors.at(name));
  return pv;
}

// Collect gradients for every parameter leaf, zeros where untouched.
template <typename T>
std::vector<TensorT<T>> collect_grads(Tape<T>& tp, const ParamStore<T>& store,
                                      const ParamVars& pv) {
  std::vector<TensorT<T>> grads;
  grads.reserve(store.order.size());
  for (const auto& name : store.order) grads.push_back(tp.grad(pv(name)));
  return grads;
}

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int t = 0;
  std::vector<Tensor> m, v;

  void step(ParamStore<float>& params, const std::vector<Tensor>& grads, double lr) {
    if (m.empty()) {
      for (const auto& name : params.order) {
        m.push_back(Tensor::zeros(params.at(name).shape));
        v.push_back(Tensor::zeros(params.at(name).shape));
      }
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (size_t i = 0; i < params.order.size(); ++i) {
      Tensor& p = params.at(params.order[i]);
      const Tensor& g = grads[i];
      for (size_t e = 0; e < p.data.size(); ++e) {
        const double gv = g.data[e];
        m[i].data[e] = static_cast<float>(beta1 * m[i].data[e] + (1.0 - beta1) * gv);
        v[i].data[e] = static_cast<float>(beta2 * v[i].data[e] + (1.0 - beta2) * gv * gv);
        const double mhat = m[i].data[e] / bc1;
        const double vhat = v[i].data[e] / bc2;
        p.data[e] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }
};

}  // namespace tsn
