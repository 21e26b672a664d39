#pragma once

#include <string>
#include <utility>
#include <vector>

#include "argan/rng.hpp"
#include "argan/tensor.hpp"

namespace argan {

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>>>;

/// Weight [out_ch x in_ch x k x k], bias [out_ch] (bias may be undefined).
template <typename T>
struct ConvParams {
  Tensor<T> weight;
  Tensor<T> bias;
  int stride = 1;
  int padding = 0;

  int out_channels() const { return weight.dim(0); }
  int in_channels() const { return weight.dim(1); }
  int kernel() const { return weight.dim(2); }
};

int conv_output_size(int in, int kernel, int stride, int pad);
int deconv_output_size(int in, int kernel, int stride, int pad);

/// Cross-correlation over an NCHW batch.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvParams<T>& p);

/// Transposed convolution, the input-gradient map of conv2d with the same
/// weights: x carries weight.dim(0) channels and the result weight.dim(1),
/// plus bias [weight.dim(1)].
template <typename T>
Tensor<T> deconv2d(const Tensor<T>& x, const ConvParams<T>& p);

enum class Mode { train, eval };

template <typename T>
struct BatchNormState {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.9;
  double eps = 1e-5;
  Mode mode = Mode::train;
};

template <typename T>
BatchNormState<T> make_batchnorm(int channels);

/// Per-channel normalization over (B, H, W). Train mode normalizes by batch
/// statistics and folds them into the running estimates; eval mode only reads
/// the running estimates.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, BatchNormState<T>& s);

/// leaky_relu(batchnorm2d(x, s), slope) as a single op; slope must be positive.
template <typename T>
Tensor<T> batchnorm_leaky_relu(const Tensor<T>& x, BatchNormState<T>& s, double slope);

template <typename T>
struct ConvLstmState {
  Tensor<T> h;
  Tensor<T> c;
};

/// The gate convolution maps [x; h] to 4*hidden channels, laid out as the
/// input, forget, output and candidate gates in that order (each block is
/// that gate's own 3x3 kernel bank).
template <typename T>
struct ConvLstmParams {
  ConvParams<T> gates;
  int hidden = 0;
};

template <typename T>
ConvLstmState<T> zero_lstm_state(int batch, int hidden, int height, int width);

template <typename T>
std::pair<Tensor<T>, ConvLstmState<T>> conv_lstm_step(const Tensor<T>& x,
                                                      const ConvLstmState<T>& state,
                                                      const ConvLstmParams<T>& params);

template <typename T>
struct SpectralState {
  Tensor<T> u;      // unit vector, length out_ch
  Tensor<T> sigma;  // last estimate of the largest singular value
  int n_power_iters = 1;
};

template <typename T>
struct SpectralResult {
  Tensor<T> weight_sn;
  double sigma = 0.0;
};

/// Power-iteration spectral normalization over the [out_ch x rest] view of
/// `weight`. Updates `s.u` and `s.sigma`; sigma is a constant for backward.
template <typename T>
SpectralResult<T> spectral_normalize(const Tensor<T>& weight, SpectralState<T>& s);

/// weight / s.sigma without iterating.
template <typename T>
Tensor<T> apply_spectral(const Tensor<T>& weight, const SpectralState<T>& s);

/// x [B x n] . weight^T [n x m] + bias [m]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// Parameter construction.
template <typename T>
Tensor<T> he_normal(const Shape& shape, int fan_in, Rng& rng);

template <typename T>
Tensor<T> param(Tensor<T> t) {
  t.set_requires_grad(true);
  return t;
}

template <typename T>
ConvParams<T> make_conv(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng);

// Deconv producing out_ch channels from in_ch.
template <typename T>
ConvParams<T> make_deconv(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng);

template <typename T>
ConvLstmParams<T> make_conv_lstm(int in_ch, int hidden, Rng& rng);

template <typename T>
SpectralState<T> make_spectral(int out_ch, int n_power_iters, Rng& rng);

template <typename T>
void add_conv(NamedTensors<T>& out, const std::string& prefix, const ConvParams<T>& p) {
  out.emplace_back(prefix + ".weight", p.weight);
  if (p.bias.defined()) out.emplace_back(prefix + ".bias", p.bias);
}

}  // namespace argan
