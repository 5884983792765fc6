#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "tsn/model.hpp"

namespace tsn {

struct BenchRow {
  std::string name;
  double ms = 0;
};

// Relative kernel costs at a given memory size; not a claim about any
// published frames-per-second figure.
inline std::vector<BenchRow> run_bench(int mem_frames, int hw) {
  if (mem_frames < 1 || hw < 1) throw InputError("bench: sizes must be positive");
  Rng rng(99);
  const int ck = 16, cv = 32;
  Tensor kq({hw, ck});
  for (auto& v : kq.data) v = static_cast<float>(rng.normal());
  PixelMemory<float> mem;
  for (int f = 0; f < mem_frames; ++f) {
    Tensor k({hw, ck}), val({hw, cv});
    for (auto& v : k.data) v = static_cast<float>(rng.normal());
    for (auto& v : val.data) v = static_cast<float>(rng.normal());
    mem.append(k, val);
  }

  auto time_ms = [](auto&& fn) {
    double best = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      fn();
      const auto t1 = std::chrono::steady_clock::now();
      best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
  };

  std::vector<BenchRow> rows;
  rows.push_back({"dense_read", time_ms([&] {
                    TensorT<float> d = pairwise_sqdist_raw(kq, mem.keys);
                    for (auto& v : d.data) v *= -1.0f;
                    TensorT<float> a = softmax_rows_raw(d);
                    volatile float sink = matmul_raw(a, mem.values).data[0];
                    (void)sink;
                  })});
  rows.push_back({"topk20_read", time_ms([&] {
                    volatile float sink = read_topk(kq, mem, 20, true).rv.data[0];
                    (void)sink;
                  })});

  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(hw)))) * 4;
  Tensor img({side, side, 3});
  for (auto& v : img.data) v = static_cast<float>(rng.uniform());
  ModelConfig cfg;
  Network<float> net = init_network<float>(cfg);
  rows.push_back({"key_encode", time_ms([&] {
                    Tape<float> tp;
                    const ParamVars pv = push_params(tp, net.params);
                    volatile float sink = tp.val(key_encode(tp, pv, tp.leaf(img), cfg).key).data[0];
                    (void)sink;
                  })});
  rows.push_back({"predictor", time_ms([&] {
                    Tape<float> tp;
                    const ParamVars pv = push_params(tp, net.params);
                    Tensor tokens({hw, cv});
                    for (auto& v : tokens.data) v = 0.1f;
                    volatile float sink =
                        tp.val(predict_theta(tp, pv, tp.leaf(tokens), cfg)).data[0];
                    (void)sink;
                  })});
  return rows;
}

}  // namespace tsn
