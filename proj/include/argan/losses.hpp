#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "argan/layers.hpp"

namespace argan {

/// Per-step weight 0.7^(N - i + 1) for step i in [1, N].
double beta_weight(int step, int steps);

/// Frozen random convolutional feature stack standing in for a pretrained
/// perceptual network: three 3x3 stride-2 conv + LeakyReLU blocks with
/// 16/32/64 channels. Gradients reach its input, never its weights.
template <typename T>
class FeatureExtractor {
 public:
  static constexpr std::uint64_t kDefaultSeed = 0x5EEDF00DULL;

  explicit FeatureExtractor(std::uint64_t seed = kDefaultSeed);
  // Replace the weights with externally trained ones (same shapes, in
  // block order: conv0.weight, conv0.bias, conv1.weight, ...).
  void load(const NamedTensors<T>& weights);

  Tensor<T> forward(const Tensor<T>& image) const;
  NamedTensors<T> weights() const;

 private:
  std::vector<ConvParams<T>> convs_;
};

template <typename T>
struct LossBreakdown {
  Tensor<T> l_det;
  Tensor<T> l_rem_mse;
  Tensor<T> l_rem_per;
  Tensor<T> l_adv_g;
  Tensor<T> l_adv_d;
  Tensor<T> l_total;
};

template <typename T>
Tensor<T> loss_det(const std::vector<Tensor<T>>& attention, const Tensor<T>& matte);

template <typename T>
struct RemovalLoss {
  Tensor<T> mse;
  Tensor<T> per;
};

template <typename T>
RemovalLoss<T> loss_rem(const std::vector<Tensor<T>>& outputs, const Tensor<T>& free,
                        const FeatureExtractor<T>& fx);

template <typename T>
struct AdversarialLoss {
  Tensor<T> d_loss;
  Tensor<T> g_loss;
};

/// Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs. Without an
/// unsupervised batch the supervised objective is used and lambda is ignored.
template <typename T>
AdversarialLoss<T> loss_adv(const Tensor<T>& d_real, const Tensor<T>& d_fake_sup,
                            const std::optional<Tensor<T>>& d_fake_unsup, double lambda);

/// l_det + l_rem_mse + l_rem_per + l_adv_g.
template <typename T>
Tensor<T> loss_total(const LossBreakdown<T>& parts);

}  // namespace argan
