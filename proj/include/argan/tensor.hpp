#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace argan {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename T>
class Tensor;

template <typename T>
struct TensorImpl;

// One recorded operation. `backward` reads the output gradient from `out`
// and accumulates into the gradients of whatever inputs it captured.
template <typename T>
struct Node {
  const char* name = "";
  std::vector<Tensor<T>> inputs;
  std::function<void(const TensorImpl<T>& out)> backward;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first needed
  bool requires_grad = false;
  std::shared_ptr<Node<T>> node;
};

/// Dense row-major tensor handle. Copies share storage; use clone() for a
/// deep copy. Image tensors use NCHW layout.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(const Shape& shape);
  static Tensor ones(const Shape& shape);
  static Tensor full(const Shape& shape, T value);
  static Tensor from(const Shape& shape, std::vector<T> values);
  static Tensor scalar(T value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int dim(int axis) const;
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  // Mutable access is for leaves only (parameter updates, buffers).
  std::span<T> data_mut();
  T item() const;
  T at(std::size_t flat_index) const { return impl_->data[flat_index]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return impl_->node == nullptr; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> grad_mut();
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const;

  TensorImpl<T>& impl() const { return *impl_; }
  const std::shared_ptr<TensorImpl<T>>& impl_ptr() const { return impl_; }
  bool same(const Tensor& other) const { return impl_ == other.impl_; }

  template <typename U>
  Tensor<U> cast() const;

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

/// Runs reverse-mode accumulation from a single-element tensor. Leaf
/// gradients accumulate across calls; intermediate gradients are reset.
template <typename T>
void backward(const Tensor<T>& loss);

// Graph recording switch (thread local).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

// Builds the result tensor and, when any input requires grad and recording is
// on, attaches a node with the given backward rule.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                      std::function<void(const TensorImpl<T>&)> backward_fn, const char* name);

// Gradient buffer of `t`, allocated on demand; nullptr when t needs no grad.
template <typename T>
T* grad_buffer(const Tensor<T>& t);

}  // namespace detail

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace argan
