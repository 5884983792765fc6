#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tsn/config.hpp"
#include "tsn/tensor.hpp"

namespace tsn {

// A named tensor as stored on disk. Exactly one of f32/f64 is populated,
// matching `dtype`.
struct TensorBlob {
  std::string name;
  std::string dtype;  // "float32" | "float64"
  std::vector<int> shape;
  std::vector<float> f32;
  std::vector<double> f64;
};

template <typename T>
TensorBlob to_blob(const std::string& name, const TensorT<T>& t);
template <>
inline TensorBlob to_blob<float>(const std::string& name, const Tensor& t) {
  return TensorBlob{name, "float32", t.shape, t.data, {}};
}
template <>
inline TensorBlob to_blob<double>(const std::string& name, const Tensor64& t) {
  return TensorBlob{name, "float64", t.shape, {}, t.data};
}

template <typename T>
TensorT<T> from_blob(const TensorBlob& b);
template <>
inline Tensor from_blob<float>(const TensorBlob& b) {
  if (b.dtype != "float32") throw InputError("tensor " + b.name + " is not float32");
  return Tensor(b.shape, b.f32);
}
template <>
inline Tensor64 from_blob<double>(const TensorBlob& b) {
  if (b.dtype != "float64") throw InputError("tensor " + b.name + " is not float64");
  return Tensor64(b.shape, b.f64);
}

// TSNT blob: "TSNT", u32 version, u32 json length, JSON {name, shape, dtype},
// raw little-endian buffer.
void write_tsnt(std::ostream& out, const TensorBlob& blob);
TensorBlob read_tsnt(std::istream& in);

void save_tensor_file(const std::string& path, const TensorBlob& blob);
TensorBlob load_tensor_file(const std::string& path);

// TSNC checkpoint: "TSNC", u32 version, u32 json length, JSON manifest with
// the model config and the named-tensor table, then the TSNT blobs in
// manifest order.
struct Checkpoint {
  ModelConfig config;
  std::vector<TensorBlob> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tsn
