#pragma once

#include <string>
#include <utility>
#include <vector>

#include "argan/layers.hpp"

namespace argan {

struct NetConfig {
  int image_size = 32;
  int steps = 3;            // progressive steps N
  int depth = 5;            // stride-2 encoder convs in the remover
  int base_channels = 64;   // encoder channel schedule min(base * 2^k, cap)
  int channel_cap = 512;
  int detector_channels = 64;
  int detector_layers = 10;
  bool share_weights = true;
  int power_iters = 1;
  double slope = 0.2;  // LeakyReLU
};

// min(base * 2^k, cap)
int encoder_channels(const NetConfig& cfg, int k);

/// Conv+BN+LeakyReLU feature stack, a ConvLSTM cell and a sigmoid head that
/// produce a one-channel attention map from (image, prior attention).
template <typename T>
class Detector {
 public:
  Detector(const NetConfig& cfg, Rng& rng);

  std::pair<Tensor<T>, ConvLstmState<T>> forward(const Tensor<T>& image, const Tensor<T>& prior,
                                                 const ConvLstmState<T>& state);
  void set_mode(Mode mode);
  int hidden() const { return lstm_.hidden; }
  void parameters(NamedTensors<T>& out, const std::string& prefix) const;
  void buffers(NamedTensors<T>& out, const std::string& prefix) const;

 private:
  double slope_;
  std::vector<ConvParams<T>> convs_;
  std::vector<BatchNormState<T>> norms_;
  ConvLstmParams<T> lstm_;
  ConvParams<T> head_;
};

/// U-Net encoder/decoder with mirrored skip concatenations and a sigmoid tail.
/// The sigmoid output, gated by the attention map, is added to the input.
template <typename T>
class Remover {
 public:
  Remover(const NetConfig& cfg, Rng& rng);

  struct Output {
    Tensor<T> image;     // clamp(previous + residual, 0, 1)
    Tensor<T> residual;  // sigmoid branch * attention, >= 0
  };
  Output forward(const Tensor<T>& previous, const Tensor<T>& attention);
  void set_mode(Mode mode);
  int divisor() const { return 1 << depth_; }
  void parameters(NamedTensors<T>& out, const std::string& prefix) const;
  void buffers(NamedTensors<T>& out, const std::string& prefix) const;

 private:
  struct Block {
    ConvParams<T> conv;
    BatchNormState<T> norm;
  };
  int depth_;
  double slope_;
  std::vector<Block> encoder_;
  std::vector<Block> decoder_;
  std::vector<Block> tail_;
  ConvParams<T> out_;
};

template <typename T>
struct GeneratorState {
  int step = 0;  // 1-based
  Tensor<T> attention;
  Tensor<T> output;
  ConvLstmState<T> lstm;
};

/// N-step recurrence: A_i from (O_{i-1}, A_{i-1}, lstm state), then
/// O_i = remover(O_{i-1}, A_i), starting from O_0 = I and A_0 = 0.
template <typename T>
class Generator {
 public:
  Generator(const NetConfig& cfg, Rng& rng);

  std::vector<GeneratorState<T>> forward(const Tensor<T>& image, int steps);
  std::vector<GeneratorState<T>> forward(const Tensor<T>& image) { return forward(image, steps_); }
  void set_mode(Mode mode);
  int steps() const { return steps_; }
  int divisor() const { return removers_.front().divisor(); }
  Detector<T>& detector(int step);
  Remover<T>& remover(int step);
  void parameters(NamedTensors<T>& out, const std::string& prefix = "gen") const;
  void buffers(NamedTensors<T>& out, const std::string& prefix = "gen") const;

 private:
  int steps_;
  bool shared_;
  std::vector<Detector<T>> detectors_;
  std::vector<Remover<T>> removers_;
};

/// Five spectrally normalized Conv+BN+LeakyReLU blocks (4x4, stride 2), then
/// a fully connected layer to one logit and a sigmoid.
template <typename T>
class Discriminator {
 public:
  Discriminator(const NetConfig& cfg, Rng& rng);

  // Probabilities [B x 1].
  Tensor<T> forward(const Tensor<T>& image);
  // Advances each spectral state by its power-iteration rounds.
  void update_spectral();
  void set_mode(Mode mode);
  Tensor<T>& fc_weight() { return fc_weight_; }
  Tensor<T>& fc_bias() { return fc_bias_; }
  void parameters(NamedTensors<T>& out, const std::string& prefix = "disc") const;
  void buffers(NamedTensors<T>& out, const std::string& prefix = "disc") const;

 private:
  int image_size_;
  double slope_;
  std::vector<ConvParams<T>> convs_;
  std::vector<SpectralState<T>> spectral_;
  std::vector<BatchNormState<T>> norms_;
  Tensor<T> fc_weight_;
  Tensor<T> fc_bias_;
};

template <typename T>
void check_spatial_divisible(const Tensor<T>& image, int divisor, const char* who);

}  // namespace argan
