#include "argan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "argan/metrics.hpp"
#include "argan/ops.hpp"

namespace argan {

namespace {

// Stream tags so the labeled and unlabeled batch orders are independent of
// each other and of weight initialization.
constexpr std::uint64_t kLabeledStream = 0x4C41424C4544ULL;
constexpr std::uint64_t kUnlabeledStream = 0x554E4C4142ULL;

const ArganConfig& checked(const ArganConfig& cfg) {
  validate(cfg);
  return cfg;
}

template <typename Net>
NamedTensors<float> params_of(const Net& net) {
  NamedTensors<float> p;
  net.parameters(p);
  return p;
}

void require_finite(const Tensor<float>& t, const char* name, int iter) {
  const double v = t.item();
  if (!std::isfinite(v)) {
    throw NumericalError(std::string(std::isnan(v) ? "NaN" : "non-finite value") + " in " + name +
                         " at iteration " + std::to_string(iter));
  }
}

double mean_of(const Tensor<float>& t) {
  double s = 0.0;
  for (float v : t.data()) s += v;
  return s / static_cast<double>(t.numel());
}

struct Batch {
  Tensor<float> shadow, matte, free;
};

Batch make_batch(const std::vector<SampleTriplet>& samples, const std::vector<int>& idx, bool labeled) {
  std::vector<const Image*> s, m, f;
  for (int i : idx) {
    s.push_back(&samples[static_cast<std::size_t>(i)].shadow);
    if (labeled) {
      m.push_back(&*samples[static_cast<std::size_t>(i)].matte);
      f.push_back(&*samples[static_cast<std::size_t>(i)].free);
    }
  }
  Batch b;
  b.shadow = images_to_tensor<float>(s);
  if (labeled) {
    b.matte = images_to_tensor<float>(m);
    b.free = images_to_tensor<float>(f);
  }
  return b;
}

void check_samples(const std::vector<SampleTriplet>& samples, const ArganConfig& cfg, bool labeled,
                   const char* what) {
  if (samples.empty()) throw DataError(std::string(what) + " dataset is empty");
  for (const auto& t : samples) {
    const std::string name = t.name.empty() ? std::string("sample") : t.name;
    if (t.shadow.width != cfg.image_size || t.shadow.height != cfg.image_size || t.shadow.channels != 3) {
      throw DataError(std::string(what) + " image " + name + " is " + std::to_string(t.shadow.width) + "x" +
                      std::to_string(t.shadow.height) + ", config expects " + std::to_string(cfg.image_size) +
                      "x" + std::to_string(cfg.image_size) + " RGB");
    }
    if (labeled && (!t.matte || !t.free)) throw DataError(std::string(what) + " sample " + name + " lacks labels");
  }
}

int checked_count(const std::vector<SampleTriplet>& samples, const ArganConfig& cfg, bool labeled,
                  const char* what) {
  check_samples(samples, cfg, labeled, what);
  return static_cast<int>(samples.size());
}

}  // namespace

Model::Model(const ArganConfig& cfg)
    : config(checked(cfg)),
      init_rng(cfg.seed),
      gen(net_config(cfg), init_rng),
      disc(net_config(cfg), init_rng),
      opt_g(params_of(gen), cfg.lr, cfg.momentum_mu),
      opt_d(params_of(disc), cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps) {}

NamedTensors<float> Model::state() const {
  NamedTensors<float> out;
  gen.parameters(out);
  gen.buffers(out);
  disc.parameters(out);
  disc.buffers(out);
  opt_g.state(out, "opt_g");
  opt_d.state(out, "opt_d");
  return out;
}

void Model::save(const std::string& path) const { save_checkpoint(path, config, state()); }

std::unique_ptr<Model> Model::load(const std::string& path) {
  CheckpointData data = load_checkpoint(path);
  auto model = std::make_unique<Model>(data.config);
  try {
    restore_tensors(model->state(), data.tensors);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path + ": " + e.what());
  }
  return model;
}

std::vector<GeneratorState<float>> Model::infer(const Tensor<float>& image, Mode mode) {
  NoGradGuard guard;
  gen.set_mode(mode);
  auto states = gen.forward(image);
  gen.set_mode(Mode::train);
  return states;
}

BatchSampler::BatchSampler(int count, int batch, std::uint64_t seed)
    : count_(count), batch_(batch), rng_(seed), order_(static_cast<std::size_t>(count)) {
  if (count < 1 || batch < 1) throw std::invalid_argument("BatchSampler: empty dataset or batch");
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::iota(order_.begin(), order_.end(), 0);
  for (int i = count_ - 1; i > 0; --i) std::swap(order_[i], order_[rng_.uniform_int(0, i)]);
  pos_ = 0;
}

std::vector<int> BatchSampler::next() {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(batch_));
  while (static_cast<int>(out.size()) < batch_) {
    if (pos_ == order_.size()) reshuffle();
    out.push_back(order_[pos_++]);
  }
  return out;
}

std::string format_log_row(const LogRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", r.iter, r.l_det, r.l_rem_mse,
                r.l_rem_per, r.l_adv_g, r.l_adv_d, r.d_real, r.d_fake);
  return buf;
}

Trainer::Trainer(Model& model, const std::vector<SampleTriplet>& labeled,
                 const std::vector<SampleTriplet>* unlabeled)
    : model_(model),
      labeled_(labeled),
      unlabeled_(unlabeled),
      labeled_batches_(checked_count(labeled, model.config, true, "labeled"), model.config.batch_size,
                       model.config.seed ^ kLabeledStream) {
  if (unlabeled_) {
    unlabeled_batches_.emplace(checked_count(*unlabeled_, model.config, false, "unlabeled"), model.config.batch_size,
                               model.config.seed ^ kUnlabeledStream);
  }
}

LogRow Trainer::step() {
  ++iter_;
  const ArganConfig& cfg = model_.config;
  Generator<float>& gen = model_.gen;
  Discriminator<float>& disc = model_.disc;
  gen.set_mode(Mode::train);
  disc.set_mode(Mode::train);

  const Batch batch = make_batch(labeled_, labeled_batches_.next(), true);
  std::optional<Batch> extra;
  if (unlabeled_batches_) extra = make_batch(*unlabeled_, unlabeled_batches_->next(), false);

  // One generator pass feeds both updates: the discriminator sees detached
  // copies, the generator step backpropagates through the live graph.
  const auto states = gen.forward(batch.shadow);
  std::vector<GeneratorState<float>> extra_states;
  if (extra) extra_states = gen.forward(extra->shadow);
  const Tensor<float> fake = states.back().output;
  std::optional<Tensor<float>> extra_fake;
  if (extra) extra_fake = extra_states.back().output;

  LogRow row;
  row.iter = iter_;

  disc.update_spectral();
  model_.opt_d.zero_grad();
  {
    const Tensor<float> d_real = disc.forward(batch.free);
    const Tensor<float> d_fake = disc.forward(fake.detach());
    std::optional<Tensor<float>> d_extra;
    if (extra_fake) d_extra = disc.forward(extra_fake->detach());
    const auto adv = loss_adv(d_real, d_fake, d_extra, cfg.lambda);
    require_finite(adv.d_loss, "l_adv_d", iter_);
    backward(adv.d_loss);
    model_.opt_d.step();
    row.l_adv_d = adv.d_loss.item();
    row.d_real = mean_of(d_real);
    row.d_fake = mean_of(d_fake);
  }

  disc.update_spectral();
  LossBreakdown<float> parts;
  {
    const Tensor<float> d_fake = disc.forward(fake);
    std::optional<Tensor<float>> d_extra;
    if (extra_fake) d_extra = disc.forward(*extra_fake);
    const Tensor<float> d_real_const = Tensor<float>::full(d_fake.shape(), 0.5f);
    parts.l_adv_g = loss_adv(d_real_const, d_fake, d_extra, cfg.lambda).g_loss;
  }
  std::vector<Tensor<float>> attention, outputs;
  for (const auto& s : states) {
    attention.push_back(s.attention);
    outputs.push_back(s.output);
  }
  parts.l_det = loss_det(attention, batch.matte);
  const auto rem = loss_rem(outputs, batch.free, fx_);
  parts.l_rem_mse = rem.mse;
  parts.l_rem_per = rem.per;
  parts.l_total = loss_total(parts);
  require_finite(parts.l_det, "l_det", iter_);
  require_finite(parts.l_rem_mse, "l_rem_mse", iter_);
  require_finite(parts.l_rem_per, "l_rem_per", iter_);
  require_finite(parts.l_adv_g, "l_adv_g", iter_);
  model_.opt_g.zero_grad();
  backward(parts.l_total);
  model_.opt_g.step();

  row.l_det = parts.l_det.item();
  row.l_rem_mse = parts.l_rem_mse.item();
  row.l_rem_per = parts.l_rem_per.item();
  row.l_adv_g = parts.l_adv_g.item();
  return row;
}

std::unique_ptr<Model> train(const ArganConfig& cfg, const std::vector<SampleTriplet>& labeled,
                             const std::vector<SampleTriplet>* unlabeled, const TrainOptions& options) {
  if (cfg.semi_supervised && !unlabeled) throw ConfigError("semi_supervised = true needs an unlabeled dataset");
  if (!cfg.semi_supervised && unlabeled) throw ConfigError("unlabeled data given but semi_supervised = false");
  auto model = std::make_unique<Model>(cfg);
  Trainer trainer(*model, labeled, unlabeled);
  if (options.log) *options.log << kLogHeader << '\n';
  for (int it = 1; it <= cfg.iterations; ++it) {
    const LogRow row = trainer.step();
    if (options.log) *options.log << format_log_row(row) << '\n' << std::flush;
    if (options.on_step) options.on_step(row);
    if (!options.checkpoint_path.empty() && cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0 &&
        it != cfg.iterations) {
      model->save(options.checkpoint_path);
    }
  }
  if (!options.checkpoint_path.empty()) model->save(options.checkpoint_path);
  return model;
}

std::string log_path_for(const std::string& checkpoint_path) {
  std::filesystem::path p(checkpoint_path);
  p.replace_extension(".log.csv");
  return p.string();
}

DatasetScores score_dataset(Model& model, const std::vector<SampleTriplet>& samples, Mode mode) {
  DatasetScores s;
  if (samples.empty()) return s;
  for (const auto& t : samples) {
    if (!t.matte || !t.free) throw DataError("score_dataset: sample " + t.name + " lacks labels");
    const auto states = model.infer(image_to_tensor<float>(t.shadow), mode);
    const Image attention = tensor_to_image(states.back().attention);
    const Image output = tensor_to_image(states.back().output);
    const Image truth = binarize_mask(*t.matte, kTruthTau);
    s.ber += ber(binarize_mask(attention, kPredictionTau), truth).percent;
    s.identity_ber += ber(Image(truth.width, truth.height, 1, 0.0f), truth).percent;
    const MetricReport r = region_report(output, *t.free, truth);
    s.rmse_shadow += r.rmse_shadow;
    s.rmse_all += r.rmse_all;
    s.identity_shadow += region_report(t.shadow, *t.free, truth).rmse_shadow;
  }
  const double n = static_cast<double>(samples.size());
  s.ber /= n;
  s.rmse_shadow /= n;
  s.rmse_all /= n;
  s.identity_shadow /= n;
  s.identity_ber /= n;
  return s;
}

}  // namespace argan
