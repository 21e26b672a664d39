#pragma once

#include <span>
#include <string>

#include "argan/layers.hpp"

namespace argan {

/// v' = mu * v + g; theta' = theta - lr * v'
template <typename T>
void momentum_step(std::span<T> params, std::span<const T> grads, std::span<T> velocity, double lr,
                   double mu);

/// Bias-corrected Adam at step t >= 1.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v, long t,
               double lr, double beta1, double beta2, double eps);

/// Classical (non-Nesterov) momentum over a parameter list. Parameters that
/// received no gradient are treated as having a zero gradient.
template <typename T>
class MomentumOptimizer {
 public:
  MomentumOptimizer(NamedTensors<T> params, double lr, double mu);
  void step();
  void zero_grad();
  // Velocity buffers, named "<param>.velocity".
  void state(NamedTensors<T>& out, const std::string& prefix) const;

 private:
  NamedTensors<T> params_;
  std::vector<Tensor<T>> velocity_;
  double lr_, mu_;
};

template <typename T>
class AdamOptimizer {
 public:
  AdamOptimizer(NamedTensors<T> params, double lr, double beta1, double beta2, double eps);
  void step();
  void zero_grad();
  long steps() const { return static_cast<long>(t_.item()); }
  // First and second moments plus the step counter as a scalar tensor.
  void state(NamedTensors<T>& out, const std::string& prefix) const;

 private:
  NamedTensors<T> params_;
  std::vector<Tensor<T>> m_, v_;
  Tensor<T> t_;
  double lr_, beta1_, beta2_, eps_;
};

}  // namespace argan
