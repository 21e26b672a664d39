#pragma once

#include <vector>

#include "argan/tensor.hpp"

namespace argan {

enum class Binary { add, sub, mul };

/// Elementwise binary op. `b` may match `a` exactly or have a single channel
/// (axis 1) that broadcasts across the channels of `a`.
template <typename T>
Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, Binary kind);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(a, b, Binary::add);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(a, b, Binary::sub);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(a, b, Binary::mul);
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
  return sub(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
  return mul(a, b);
}

// x * s + offset with constant s and offset.
template <typename T>
Tensor<T> affine(const Tensor<T>& x, double scale, double offset);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, double s) {
  return affine(x, s, 0.0);
}

enum class Activation { sigmoid, tanh, leaky_relu };

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind, double slope = 0.2);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return activation(x, Activation::sigmoid);
}
template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return activation(x, Activation::tanh);
}
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double slope = 0.2) {
  return activation(x, Activation::leaky_relu, slope);
}

template <typename T>
Tensor<T> log(const Tensor<T>& x);

/// Clamp to [lo, hi]; gradient passes where lo <= x <= hi.
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, double lo, double hi);

/// [m x k] . [k x n] -> [m x n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

enum class Reduction { sum, mean };

template <typename T>
Tensor<T> reduce(const Tensor<T>& x, Reduction kind);

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  return reduce(x, Reduction::sum);
}
template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return reduce(x, Reduction::mean);
}

/// mean((a - b)^2)
template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);

/// Concatenates NCHW tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int start, int count);

}  // namespace argan
