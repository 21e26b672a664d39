#include "argan/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace argan {

namespace {

void check_sizes(std::size_t p, std::size_t g, std::size_t s, const char* who) {
  if (p != g || p != s) {
    throw ShapeError(std::string(who) + ": size mismatch (params " + std::to_string(p) + ", grads " +
                     std::to_string(g) + ", state " + std::to_string(s) + ")");
  }
}

}  // namespace

template <typename T>
void momentum_step(std::span<T> params, std::span<const T> grads, std::span<T> velocity, double lr,
                   double mu) {
  check_sizes(params.size(), grads.size(), velocity.size(), "momentum_step");
  const T tl = static_cast<T>(lr), tm = static_cast<T>(mu);
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = tm * velocity[i] + grads[i];
    params[i] -= tl * velocity[i];
  }
}

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v, long t,
               double lr, double beta1, double beta2, double eps) {
  check_sizes(params.size(), grads.size(), m.size(), "adam_step");
  check_sizes(params.size(), grads.size(), v.size(), "adam_step");
  if (t < 1) throw std::invalid_argument("adam_step: t must be >= 1");
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    m[i] = b1 * m[i] + (1 - b1) * g;
    v[i] = b2 * v[i] + (1 - b2) * g * g;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    params[i] = static_cast<T>(params[i] - lr * mhat / (std::sqrt(vhat) + eps));
  }
}

namespace {

template <typename T>
std::span<const T> grad_or_zero(const Tensor<T>& p, std::vector<T>& zeros) {
  if (p.has_grad()) return p.grad();
  zeros.assign(p.numel(), T(0));
  return zeros;
}

}  // namespace

template <typename T>
MomentumOptimizer<T>::MomentumOptimizer(NamedTensors<T> params, double lr, double mu)
    : params_(std::move(params)), lr_(lr), mu_(mu) {
  for (const auto& [name, p] : params_) velocity_.push_back(Tensor<T>::zeros(p.shape()));
}

template <typename T>
void MomentumOptimizer<T>::step() {
  std::vector<T> zeros;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<T>& p = params_[i].second;
    momentum_step<T>(p.data_mut(), grad_or_zero(p, zeros), velocity_[i].data_mut(), lr_, mu_);
  }
}

template <typename T>
void MomentumOptimizer<T>::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

template <typename T>
void MomentumOptimizer<T>::state(NamedTensors<T>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.emplace_back(prefix + "." + params_[i].first + ".velocity", velocity_[i]);
  }
}

template <typename T>
AdamOptimizer<T>::AdamOptimizer(NamedTensors<T> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), t_(Tensor<T>::scalar(0)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, p] : params_) {
    m_.push_back(Tensor<T>::zeros(p.shape()));
    v_.push_back(Tensor<T>::zeros(p.shape()));
  }
}

template <typename T>
void AdamOptimizer<T>::step() {
  const long t = steps() + 1;
  t_.data_mut()[0] = static_cast<T>(t);
  std::vector<T> zeros;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<T>& p = params_[i].second;
    adam_step<T>(p.data_mut(), grad_or_zero(p, zeros), m_[i].data_mut(), v_[i].data_mut(), t, lr_, beta1_,
                 beta2_, eps_);
  }
}

template <typename T>
void AdamOptimizer<T>::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

template <typename T>
void AdamOptimizer<T>::state(NamedTensors<T>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.emplace_back(prefix + "." + params_[i].first + ".m", m_[i]);
    out.emplace_back(prefix + "." + params_[i].first + ".v", v_[i]);
  }
  out.emplace_back(prefix + ".step", t_);
}

template void momentum_step(std::span<float>, std::span<const float>, std::span<float>, double, double);
template void momentum_step(std::span<double>, std::span<const double>, std::span<double>, double, double);
template void adam_step(std::span<float>, std::span<const float>, std::span<float>, std::span<float>, long,
                        double, double, double, double);
template void adam_step(std::span<double>, std::span<const double>, std::span<double>, std::span<double>, long,
                        double, double, double, double);
template class MomentumOptimizer<float>;
template class MomentumOptimizer<double>;
template class AdamOptimizer<float>;
template class AdamOptimizer<double>;

}  // namespace argan
