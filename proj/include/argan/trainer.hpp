#pragma once

#include <functional>
#include <memory>
#include <ostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "argan/checkpoint.hpp"
#include "argan/config.hpp"
#include "argan/data.hpp"
#include "argan/losses.hpp"
#include "argan/networks.hpp"
#include "argan/optim.hpp"

namespace argan {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Generator, discriminator and their optimizers, built from one seed.
struct Model {
  explicit Model(const ArganConfig& cfg);

  ArganConfig config;
  Rng init_rng;  // consumed by weight initialization
  Generator<float> gen;
  Discriminator<float> disc;
  MomentumOptimizer<float> opt_g;
  AdamOptimizer<float> opt_d;

  /// Everything a checkpoint holds, in a fixed order.
  NamedTensors<float> state() const;
  void save(const std::string& path) const;
  /// Builds a model from the checkpoint's config and restores every tensor.
  static std::unique_ptr<Model> load(const std::string& path);

  /// Runs the generator without recording a graph.
  std::vector<GeneratorState<float>> infer(const Tensor<float>& image, Mode mode = Mode::eval);
};

/// Epoch-wise shuffled index stream.
class BatchSampler {
 public:
  BatchSampler(int count, int batch, std::uint64_t seed);
  std::vector<int> next();

 private:
  void reshuffle();
  int count_, batch_;
  Rng rng_;
  std::vector<int> order_;
  std::size_t pos_ = 0;
};

struct LogRow {
  int iter = 0;
  double l_det = 0, l_rem_mse = 0, l_rem_per = 0, l_adv_g = 0, l_adv_d = 0, d_real = 0, d_fake = 0;
};

inline constexpr const char* kLogHeader = "iter,l_det,l_rem_mse,l_rem_per,l_adv_g,l_adv_d,d_real,d_fake";
std::string format_log_row(const LogRow& row);

/// Alternating optimization: per iteration one discriminator step (Adam) on
/// detached generator outputs, then one generator step (momentum) on the
/// total generator loss.
class Trainer {
 public:
  Trainer(Model& model, const std::vector<SampleTriplet>& labeled,
          const std::vector<SampleTriplet>* unlabeled = nullptr);

  LogRow step();
  int iteration() const { return iter_; }

 private:
  Model& model_;
  const std::vector<SampleTriplet>& labeled_;
  const std::vector<SampleTriplet>* unlabeled_;
  FeatureExtractor<float> fx_;
  BatchSampler labeled_batches_;
  std::optional<BatchSampler> unlabeled_batches_;
  int iter_ = 0;
};

struct TrainOptions {
  std::string checkpoint_path;  // empty: no checkpoints
  std::ostream* log = nullptr;  // CSV rows including the header
  std::function<void(const LogRow&)> on_step;
};

/// Runs config.iterations steps; returns the trained model.
std::unique_ptr<Model> train(const ArganConfig& cfg, const std::vector<SampleTriplet>& labeled,
                             const std::vector<SampleTriplet>* unlabeled, const TrainOptions& options);

/// "<dir>/<stem>.log.csv" next to a checkpoint path.
std::string log_path_for(const std::string& checkpoint_path);

struct DatasetScores {
  double ber = 0.0;             // mean over images, prediction A_N vs ground-truth matte
  double rmse_shadow = 0.0;     // mean over images, O_N vs F
  double rmse_all = 0.0;
  double identity_shadow = 0.0; // same metric for O = I
  double identity_ber = 0.0;    // attention of all zeros
};

/// Scores the final step of the generator on labeled samples, one image at a time.
DatasetScores score_dataset(Model& model, const std::vector<SampleTriplet>& samples, Mode mode = Mode::eval);

}  // namespace argan
