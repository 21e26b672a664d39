#include "argan/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "argan/ops.hpp"

namespace argan {

namespace {

constexpr double kProbEps = 1e-7;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* who) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(who) + ": shape " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// mean(log(clamp(p))) or mean(log(clamp(1 - p))).
template <typename T>
Tensor<T> mean_log(const Tensor<T>& p, bool complement) {
  Tensor<T> q = complement ? affine(p, -1.0, 1.0) : p;
  return mean(log(clamp(q, kProbEps, 1.0 - kProbEps)));
}

}  // namespace

double beta_weight(int step, int steps) {
  if (steps < 1 || step < 1 || step > steps) {
    throw std::invalid_argument("beta_weight: step " + std::to_string(step) + " outside [1, " +
                                std::to_string(steps) + "]");
  }
  return std::pow(0.7, steps - step + 1);
}

template <typename T>
FeatureExtractor<T>::FeatureExtractor(std::uint64_t seed) {
  Rng rng(seed);
  const int widths[] = {3, 16, 32, 64};
  for (int k = 0; k < 3; ++k) {
    ConvParams<T> p;
    p.weight = he_normal<T>({widths[k + 1], widths[k], 3, 3}, widths[k] * 9, rng);
    p.bias = Tensor<T>::zeros({widths[k + 1]});
    p.stride = 2;
    p.padding = 1;
    convs_.push_back(std::move(p));
  }
}

template <typename T>
void FeatureExtractor<T>::load(const NamedTensors<T>& weights) {
  if (weights.size() != convs_.size() * 2) {
    throw std::invalid_argument("FeatureExtractor::load: expected " +
                                std::to_string(convs_.size() * 2) + " tensors, got " +
                                std::to_string(weights.size()));
  }
  for (std::size_t k = 0; k < convs_.size(); ++k) {
    const auto& w = weights[2 * k].second;
    const auto& b = weights[2 * k + 1].second;
    if (w.shape() != convs_[k].weight.shape() || b.shape() != convs_[k].bias.shape()) {
      throw ShapeError("FeatureExtractor::load: block " + std::to_string(k) + " expects " +
                       shape_str(convs_[k].weight.shape()) + " / " +
                       shape_str(convs_[k].bias.shape()));
    }
    convs_[k].weight = w.detach().clone();
    convs_[k].bias = b.detach().clone();
  }
}

template <typename T>
Tensor<T> FeatureExtractor<T>::forward(const Tensor<T>& image) const {
  Tensor<T> h = image;
  for (const auto& p : convs_) h = leaky_relu(conv2d(h, p), 0.2);
  return h;
}

template <typename T>
NamedTensors<T> FeatureExtractor<T>::weights() const {
  NamedTensors<T> out;
  for (std::size_t k = 0; k < convs_.size(); ++k) add_conv(out, "conv" + std::to_string(k), convs_[k]);
  return out;
}

template <typename T>
Tensor<T> loss_det(const std::vector<Tensor<T>>& attention, const Tensor<T>& matte) {
  if (attention.empty()) throw std::invalid_argument("loss_det: no attention maps");
  const int n = static_cast<int>(attention.size());
  Tensor<T> total;
  for (int i = 0; i < n; ++i) {
    require_same_shape(attention[i], matte, "loss_det");
    Tensor<T> term = scale(mse(attention[i], matte), beta_weight(i + 1, n));
    total = i == 0 ? term : total + term;
  }
  return total;
}

template <typename T>
RemovalLoss<T> loss_rem(const std::vector<Tensor<T>>& outputs, const Tensor<T>& free,
                        const FeatureExtractor<T>& fx) {
  if (outputs.empty()) throw std::invalid_argument("loss_rem: no outputs");
  const int n = static_cast<int>(outputs.size());
  Tensor<T> target_features;
  {
    NoGradGuard guard;
    target_features = fx.forward(free.detach());
  }
  RemovalLoss<T> r;
  for (int i = 0; i < n; ++i) {
    require_same_shape(outputs[i], free, "loss_rem");
    Tensor<T> m = scale(mse(outputs[i], free), beta_weight(i + 1, n));
    Tensor<T> p = mse(fx.forward(outputs[i]), target_features);
    r.mse = i == 0 ? m : r.mse + m;
    r.per = i == 0 ? p : r.per + p;
  }
  return r;
}

template <typename T>
AdversarialLoss<T> loss_adv(const Tensor<T>& d_real, const Tensor<T>& d_fake_sup,
                            const std::optional<Tensor<T>>& d_fake_unsup, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("loss_adv: lambda " + std::to_string(lambda) + " outside [0, 1]");
  }
  require_same_shape(d_real, d_fake_sup, "loss_adv");
  Tensor<T> d_sup = mean_log(d_real, false) + mean_log(d_fake_sup, true);
  Tensor<T> g_sup = mean_log(d_fake_sup, false);
  AdversarialLoss<T> r;
  if (!d_fake_unsup) {
    r.d_loss = scale(d_sup, -1.0);
    r.g_loss = scale(g_sup, -1.0);
    return r;
  }
  const Tensor<T>& u = *d_fake_unsup;
  if (u.ndim() != 2 || u.dim(1) != 1) {
    throw ShapeError("loss_adv: unsupervised scores must be [B x 1], got " + shape_str(u.shape()));
  }
  // With lambda = 1 the unlabeled terms are multiplied by an exact zero, so
  // the result matches the supervised branch bit for bit.
  Tensor<T> d_mix = scale(d_sup, lambda) + scale(mean_log(u, true), 1.0 - lambda);
  Tensor<T> g_mix = scale(g_sup, lambda) + scale(mean_log(u, false), 1.0 - lambda);
  r.d_loss = scale(d_mix, -1.0);
  r.g_loss = scale(g_mix, -1.0);
  return r;
}

template <typename T>
Tensor<T> loss_total(const LossBreakdown<T>& parts) {
  return parts.l_det + parts.l_rem_mse + parts.l_rem_per + parts.l_adv_g;
}

#define ARGAN_INSTANTIATE(T)                                                                   \
  template class FeatureExtractor<T>;                                                          \
  template Tensor<T> loss_det(const std::vector<Tensor<T>>&, const Tensor<T>&);                \
  template RemovalLoss<T> loss_rem(const std::vector<Tensor<T>>&, const Tensor<T>&,            \
                                   const FeatureExtractor<T>&);                                \
  template AdversarialLoss<T> loss_adv(const Tensor<T>&, const Tensor<T>&,                     \
                                       const std::optional<Tensor<T>>&, double);               \
  template Tensor<T> loss_total(const LossBreakdown<T>&);

ARGAN_INSTANTIATE(float)
ARGAN_INSTANTIATE(double)

}  // namespace argan
