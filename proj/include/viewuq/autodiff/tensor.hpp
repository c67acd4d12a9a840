#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "viewuq/core/error.hpp"

namespace viewuq {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major array with an optional gradient buffer of the same length.
template <typename T>
struct BasicTensor {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty when no gradient has been produced
  bool requires_grad = false;

  BasicTensor() = default;
  BasicTensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (shape_numel(shape) != data.size()) {
      throw ShapeError("tensor of shape " + shape_str(shape) + " given " +
                       std::to_string(data.size()) + " values");
    }
  }

  static BasicTensor zeros(Shape s) {
    const std::size_t n = shape_numel(s);
    return BasicTensor(std::move(s), std::vector<T>(n, T(0)));
  }
  static BasicTensor filled(Shape s, T value) {
    const std::size_t n = shape_numel(s);
    return BasicTensor(std::move(s), std::vector<T>(n, value));
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  bool has_grad() const { return !grad.empty(); }
  bool is_scalar() const { return data.size() == 1; }

  void zero_grad() { grad.assign(data.size(), T(0)); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  std::span<T> values() { return data; }
  std::span<const T> values() const { return data; }

  template <typename U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    out.requires_grad = requires_grad;
    return out;
  }
};

using Tensor = BasicTensor<float>;

}  // namespace viewuq
