#pragma once

#include <stdexcept>
#include <string>

namespace tsn {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or extent mismatch between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Query against a memory with no stored frames/heads.
struct EmptyMemoryError : Error {
  using Error::Error;
};

// Bad file, directory, or command-line input.
struct InputError : Error {
  using Error::Error;
};

// Malformed configuration key or value.
struct ConfigError : Error {
  using Error::Error;
};

// NaN/divergence detected during training or inference.
struct NumericalError : Error {
  using Error::Error;
};

// API used out of order (e.g. query before first-frame init).
struct SequencingError : Error {
  using Error::Error;
};

template <typename T>
const char* dtype_name();

template <>
inline const char* dtype_name<float>() {
  return "float32";
}
template <>
inline const char* dtype_name<double>() {
  return "float64";
}

}  // namespace tsn
