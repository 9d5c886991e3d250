#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "sortrl/error.hpp"

namespace sortrl {

// Dense row-major tensor. The library only ever needs rank 1 and 2; rank-1
// tensors are treated as a single row by the 2-D accessors.
template <class F>
struct TensorT {
  std::vector<int> shape;
  std::vector<F> data;

  TensorT() = default;

  static TensorT zeros(std::vector<int> shape) {
    TensorT t;
    t.shape = std::move(shape);
    t.data.assign(static_cast<std::size_t>(numel_of(t.shape)), F(0));
    return t;
  }

  static TensorT from(std::vector<int> shape, std::vector<F> values) {
    require(numel_of(shape) == static_cast<long long>(values.size()),
            "tensor shape does not match the number of values");
    TensorT t;
    t.shape = std::move(shape);
    t.data = std::move(values);
    return t;
  }

  int numel() const { return static_cast<int>(data.size()); }

  int rows() const { return shape.size() == 2 ? shape[0] : 1; }
  int cols() const { return shape.empty() ? 0 : shape.back(); }

  F& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  F at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

  void fill(F v) { data.assign(data.size(), v); }

  bool same_shape(const TensorT& other) const { return shape == other.shape; }

  bool all_finite() const {
    for (F v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <class G>
  TensorT<G> cast() const {
    TensorT<G> out;
    out.shape = shape;
    out.data.reserve(data.size());
    for (F v : data) out.data.push_back(static_cast<G>(v));
    return out;
  }

 private:
  static long long numel_of(const std::vector<int>& shape) {
    long long n = 1;
    for (int d : shape) {
      require(d >= 1, "tensor dimensions must be positive");
      n *= d;
    }
    return shape.empty() ? 0 : n;
  }
};

using Tensor = TensorT<float>;

template <class F>
std::string shape_string(const TensorT<F>& t) {
  std::string s = "[";
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(t.shape[i]);
  }
  return s + "]";
}

}  // namespace sortrl
