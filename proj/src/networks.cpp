#include "argan/networks.hpp"

#include <algorithm>

#include "argan/ops.hpp"

namespace argan {

int encoder_channels(const NetConfig& cfg, int k) {
  long long c = cfg.base_channels;
  for (int i = 0; i < k && c < cfg.channel_cap; ++i) c *= 2;
  return static_cast<int>(std::min<long long>(c, cfg.channel_cap));
}

template <typename T>
void check_spatial_divisible(const Tensor<T>& image, int divisor, const char* who) {
  if (image.ndim() != 4) {
    throw ShapeError(std::string(who) + ": expected NCHW input, got " + shape_str(image.shape()));
  }
  if (image.dim(2) % divisor != 0 || image.dim(3) % divisor != 0) {
    throw ShapeError(std::string(who) + ": height and width must be divisible by " +
                     std::to_string(divisor) + ", got " + shape_str(image.shape()));
  }
}

namespace {
template <typename T>
Tensor<T> conv_bn_lrelu(const Tensor<T>& x, const ConvParams<T>& conv, BatchNormState<T>& bn,
                        double slope) {
  return batchnorm_leaky_relu(conv2d(x, conv), bn, slope);
}
}  // namespace

// ---------------------------------------------------------------- Detector

template <typename T>
Detector<T>::Detector(const NetConfig& cfg, Rng& rng) : slope_(cfg.slope) {
  const int width = cfg.detector_channels;
  int in_ch = 4;
  for (int i = 0; i < cfg.detector_layers; ++i) {
    convs_.push_back(make_conv<T>(in_ch, width, 3, 1, 1, rng));
    norms_.push_back(make_batchnorm<T>(width));
    in_ch = width;
  }
  lstm_ = make_conv_lstm<T>(in_ch, width, rng);
  head_ = make_conv<T>(width, 1, 3, 1, 1, rng);
}

template <typename T>
std::pair<Tensor<T>, ConvLstmState<T>> Detector<T>::forward(const Tensor<T>& image,
                                                            const Tensor<T>& prior,
                                                            const ConvLstmState<T>& state) {
  if (image.ndim() != 4 || image.dim(1) != 3) {
    throw ShapeError("detector: expected Bx3xHxW image, got " + shape_str(image.shape()));
  }
  const Shape expect_prior{image.dim(0), 1, image.dim(2), image.dim(3)};
  if (prior.shape() != expect_prior) {
    throw ShapeError("detector: prior attention " + shape_str(prior.shape()) + " does not match image " +
                     shape_str(image.shape()));
  }
  Tensor<T> x = concat_channels<T>({image, prior});
  for (std::size_t i = 0; i < convs_.size(); ++i) x = conv_bn_lrelu(x, convs_[i], norms_[i], slope_);
  auto [h, next] = conv_lstm_step(x, state, lstm_);
  return {sigmoid(conv2d(h, head_)), next};
}

template <typename T>
void Detector<T>::set_mode(Mode mode) {
  for (auto& n : norms_) n.mode = mode;
}

template <typename T>
void Detector<T>::parameters(NamedTensors<T>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const std::string p = prefix + ".conv" + std::to_string(i);
    add_conv(out, p, convs_[i]);
    out.emplace_back(p + ".bn.gamma", norms_[i].gamma);
    out.emplace_back(p + ".bn.beta", norms_[i].beta);
  }
  add_conv(out, prefix + ".lstm.gates", lstm_.gates);
  add_conv(out, prefix + ".head", head_);
}

template <typename T>
void Detector<T>::buffers(NamedTensors<T>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < norms_.size(); ++i) {
    const std::string p = prefix + ".conv" + std::to_string(i) + ".bn";
    out.emplace_back(p + ".running_mean", norms_[i].running_mean);
    out.emplace_back(p + ".running_var", norms_[i].running_var);
  }
}

// ----------------------------------------------------------------- Remover

template <typename T>
Remover<T>::Remover(const NetConfig& cfg, Rng& rng) : depth_(cfg.depth), slope_(cfg.slope) {
  if (depth_ < 1) throw std::invalid_argument("remover depth must be >= 1");
  std::vector<int> enc(depth_);
  for (int k = 0; k < depth_; ++k) enc[k] = encoder_channels(cfg, k);
  int in_ch = 3;
  for (int k = 0; k < depth_; ++k) {
    encoder_.push_back({make_conv<T>(in_ch, enc[k], 3, 2, 1, rng), make_batchnorm<T>(enc[k])});
    in_ch = enc[k];
  }
  // Decoder block k mirrors encoder block d-2-k; the last one returns to RGB.
  for (int k = 0; k < depth_; ++k) {
    const int out_ch = k < depth_ - 1 ? enc[depth_ - 2 - k] : 3;
    decoder_.push_back({make_deconv<T>(in_ch, out_ch, 4, 2, 1, rng), make_batchnorm<T>(out_ch)});
    in_ch = k < depth_ - 1 ? out_ch + enc[depth_ - 2 - k] : out_ch;
  }
  for (int i = 0; i < 2; ++i) tail_.push_back({make_conv<T>(3, 3, 3, 1, 1, rng), make_batchnorm<T>(3)});
  out_ = make_conv<T>(3, 3, 3, 1, 1, rng);
}

template <typename T>
typename Remover<T>::Output Remover<T>::forward(const Tensor<T>& previous, const Tensor<T>& attention) {
  check_spatial_divisible(previous, divisor(), "remover");
  if (previous.dim(1) != 3) {
    throw ShapeError("remover: expected Bx3xHxW image, got " + shape_str(previous.shape()));
  }
  const Shape expect_att{previous.dim(0), 1, previous.dim(2), previous.dim(3)};
  if (attention.shape() != expect_att) {
    throw ShapeError("remover: attention " + shape_str(attention.shape()) + " does not match image " +
                     shape_str(previous.shape()));
  }
  std::vector<Tensor<T>> skips;
  Tensor<T> x = previous;
  for (auto& blk : encoder_) {
    x = conv_bn_lrelu(x, blk.conv, blk.norm, slope_);
    skips.push_back(x);
  }
  for (int k = 0; k < depth_; ++k) {
    auto& blk = decoder_[k];
    x = batchnorm_leaky_relu(deconv2d(x, blk.conv), blk.norm, slope_);
    if (k < depth_ - 1) x = concat_channels<T>({x, skips[depth_ - 2 - k]});
  }
  for (auto& blk : tail_) x = conv_bn_lrelu(x, blk.conv, blk.norm, slope_);
  Tensor<T> residual = mul(sigmoid(conv2d(x, out_)), attention);
  return {clamp(add(previous, residual), 0.0, 1.0), residual};
}

template <typename T>
void Remover<T>::set_mode(Mode mode) {
  for (auto* blocks : {&encoder_, &decoder_, &tail_})
    for (auto& b : *blocks) b.norm.mode = mode;
}

template <typename T>
void Remover<T>::parameters(NamedTensors<T>& out, const std::string& prefix) const {
  auto add_blocks = [&](const std::vector<Block>& blocks, const std::string& name) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string p = prefix + "." + name + std::to_string(i);
      add_conv(out, p, blocks[i].conv);
      out.emplace_back(p + ".bn.gamma", blocks[i].norm.gamma);
      out.emplace_back(p + ".bn.beta", blocks[i].norm.beta);
    }
  };
  add_blocks(encoder_, "enc");
  add_blocks(decoder_, "dec");
  add_blocks(tail_, "tail");
  add_conv(out, prefix + ".out", out_);
}

template <typename T>
void Remover<T>::buffers(NamedTensors<T>& out, const std::string& prefix) const {
  auto add_blocks = [&](const std::vector<Block>& blocks, const std::string& name) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string p = prefix + "." + name + std::to_string(i) + ".bn";
      out.emplace_back(p + ".running_mean", blocks[i].norm.running_mean);
      out.emplace_back(p + ".running_var", blocks[i].norm.running_var);
    }
  };
  add_blocks(encoder_, "enc");
  add_blocks(decoder_, "dec");
  add_blocks(tail_, "tail");
}

// --------------------------------------------------------------- Generator

template <typename T>
Generator<T>::Generator(const NetConfig& cfg, Rng& rng) : steps_(cfg.steps), shared_(cfg.share_weights) {
  if (steps_ < 1) throw std::invalid_argument("generator needs at least one progressive step");
  const int copies = shared_ ? 1 : steps_;
  for (int i = 0; i < copies; ++i) {
    detectors_.emplace_back(cfg, rng);
    removers_.emplace_back(cfg, rng);
  }
}

template <typename T>
Detector<T>& Generator<T>::detector(int step) {
  return shared_ ? detectors_.front() : detectors_.at(static_cast<std::size_t>(step - 1));
}

template <typename T>
Remover<T>& Generator<T>::remover(int step) {
  return shared_ ? removers_.front() : removers_.at(static_cast<std::size_t>(step - 1));
}

template <typename T>
std::vector<GeneratorState<T>> Generator<T>::forward(const Tensor<T>& image, int steps) {
  if (steps < 1) throw std::invalid_argument("generator: steps must be >= 1");
  if (!shared_ && steps > steps_) {
    throw std::invalid_argument("generator: unshared weights cover " + std::to_string(steps_) +
                                " steps, asked for " + std::to_string(steps));
  }
  check_spatial_divisible(image, divisor(), "generator");
  const int batch = image.dim(0), height = image.dim(2), width = image.dim(3);
  Tensor<T> output = image;
  Tensor<T> attention = Tensor<T>::zeros({batch, 1, height, width});
  ConvLstmState<T> lstm = zero_lstm_state<T>(batch, detectors_.front().hidden(), height, width);
  std::vector<GeneratorState<T>> states;
  states.reserve(static_cast<std::size_t>(steps));
  for (int i = 1; i <= steps; ++i) {
    auto [att, next] = detector(i).forward(output, attention, lstm);
    auto removed = remover(i).forward(output, att);
    attention = att;
    lstm = next;
    output = removed.image;
    states.push_back({i, attention, output, lstm});
  }
  return states;
}

template <typename T>
void Generator<T>::set_mode(Mode mode) {
  for (auto& d : detectors_) d.set_mode(mode);
  for (auto& r : removers_) r.set_mode(mode);
}

template <typename T>
void Generator<T>::parameters(NamedTensors<T>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < detectors_.size(); ++i) {
    const std::string tag = shared_ ? "" : std::to_string(i + 1);
    detectors_[i].parameters(out, prefix + ".det" + tag);
    removers_[i].parameters(out, prefix + ".rem" + tag);
  }
}

template <typename T>
void Generator<T>::buffers(NamedTensors<T>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < detectors_.size(); ++i) {
    const std::string tag = shared_ ? "" : std::to_string(i + 1);
    detectors_[i].buffers(out, prefix + ".det" + tag);
    removers_[i].buffers(out, prefix + ".rem" + tag);
  }
}

// ----------------------------------------------------------- Discriminator

template <typename T>
Discriminator<T>::Discriminator(const NetConfig& cfg, Rng& rng)
    : image_size_(cfg.image_size), slope_(cfg.slope) {
  if (image_size_ % 32 != 0) {
    throw std::invalid_argument("discriminator: image size must be divisible by 32");
  }
  int in_ch = 3;
  for (int k = 0; k < 5; ++k) {
    const int out_ch = k < 4 ? encoder_channels(cfg, k) : 1;
    convs_.push_back(make_conv<T>(in_ch, out_ch, 4, 2, 1, rng));
    spectral_.push_back(make_spectral<T>(out_ch, cfg.power_iters, rng));
    norms_.push_back(make_batchnorm<T>(out_ch));
    in_ch = out_ch;
  }
  const int flat = (image_size_ / 32) * (image_size_ / 32);
  fc_weight_ = param(he_normal<T>({1, flat}, flat, rng));
  fc_bias_ = param(Tensor<T>::zeros({1}));
  update_spectral();
}

template <typename T>
void Discriminator<T>::update_spectral() {
  for (std::size_t i = 0; i < convs_.size(); ++i) spectral_normalize(convs_[i].weight, spectral_[i]);
}

template <typename T>
Tensor<T> Discriminator<T>::forward(const Tensor<T>& image) {
  check_spatial_divisible(image, 32, "discriminator");
  if (image.dim(1) != 3 || image.dim(2) != image_size_ || image.dim(3) != image_size_) {
    throw ShapeError("discriminator: expected Bx3x" + std::to_string(image_size_) + "x" +
                     std::to_string(image_size_) + " input, got " + shape_str(image.shape()));
  }
  Tensor<T> x = image;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    ConvParams<T> sn = convs_[i];
    sn.weight = apply_spectral(convs_[i].weight, spectral_[i]);
    x = conv_bn_lrelu(x, sn, norms_[i], slope_);
  }
  const int batch = image.dim(0);
  x = reshape(x, {batch, static_cast<int>(x.numel()) / batch});
  return sigmoid(linear(x, fc_weight_, fc_bias_));
}

template <typename T>
void Discriminator<T>::set_mode(Mode mode) {
  for (auto& n : norms_) n.mode = mode;
}

template <typename T>
void Discriminator<T>::parameters(NamedTensors<T>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const std::string p = prefix + ".conv" + std::to_string(i);
    add_conv(out, p, convs_[i]);
    out.emplace_back(p + ".bn.gamma", norms_[i].gamma);
    out.emplace_back(p + ".bn.beta", norms_[i].beta);
  }
  out.emplace_back(prefix + ".fc.weight", fc_weight_);
  out.emplace_back(prefix + ".fc.bias", fc_bias_);
}

template <typename T>
void Discriminator<T>::buffers(NamedTensors<T>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const std::string p = prefix + ".conv" + std::to_string(i);
    out.emplace_back(p + ".bn.running_mean", norms_[i].running_mean);
    out.emplace_back(p + ".bn.running_var", norms_[i].running_var);
    out.emplace_back(p + ".sn.u", spectral_[i].u);
    out.emplace_back(p + ".sn.sigma", spectral_[i].sigma);
  }
}

template class Detector<float>;
template class Detector<double>;
template class Remover<float>;
template class Remover<double>;
template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template void check_spatial_divisible(const Tensor<float>&, int, const char*);
template void check_spatial_divisible(const Tensor<double>&, int, const char*);

}  // namespace argan
