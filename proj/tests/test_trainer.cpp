#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <sstream>

#include "argan/trainer.hpp"

using namespace argan;
namespace fs = std::filesystem;

namespace {

ArganConfig tiny_config() {
  ArganConfig c;
  c.base_channels = 4;
  c.channel_cap = 8;
  c.detector_channels = 4;
  c.detector_layers = 2;
  c.batch_size = 2;
  c.iterations = 3;
  c.seed = 5;
  return c;
}

std::vector<SampleTriplet> samples(int n, std::uint64_t first = 1) {
  std::vector<SampleTriplet> out;
  for (int i = 0; i < n; ++i) out.push_back(gen_synthetic_sample(first + static_cast<std::uint64_t>(i), 32));
  return out;
}

std::string run_log(const ArganConfig& cfg, const std::vector<SampleTriplet>& data,
                    const std::vector<SampleTriplet>* unlabeled = nullptr) {
  std::ostringstream log;
  TrainOptions opt;
  opt.log = &log;
  train(cfg, data, unlabeled, opt);
  return log.str();
}

std::vector<float> flat_outputs(const std::vector<GeneratorState<float>>& states) {
  std::vector<float> v;
  for (const auto& s : states) {
    v.insert(v.end(), s.attention.data().begin(), s.attention.data().end());
    v.insert(v.end(), s.output.data().begin(), s.output.data().end());
  }
  return v;
}

}  // namespace

TEST(Trainer, SameSeedGivesIdenticalLogs) {
  const auto data = samples(4);
  const std::string a = run_log(tiny_config(), data), b = run_log(tiny_config(), data);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.substr(0, a.find('\n')), kLogHeader);
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 4);
  ArganConfig other = tiny_config();
  other.seed = 6;
  EXPECT_NE(run_log(other, data), a);
}

TEST(Trainer, ZeroIterationsKeepsInitialization) {
  ArganConfig cfg = tiny_config();
  cfg.iterations = 0;
  const auto trained = train(cfg, samples(2), nullptr, {});
  Model fresh(cfg);
  EXPECT_EQ(encode_checkpoint(cfg, trained->state()), encode_checkpoint(cfg, fresh.state()));
}

TEST(Trainer, LambdaOneSemiSupervisedMatchesSupervised) {
  const auto data = samples(4), extra = samples(3, 50);
  ArganConfig sup = tiny_config();
  sup.lambda = 1.0;
  ArganConfig semi = sup;
  semi.semi_supervised = true;
  EXPECT_EQ(run_log(sup, data), run_log(semi, data, &extra));
}

TEST(Trainer, SemiSupervisedFlagMustMatchData) {
  const auto data = samples(2);
  ArganConfig semi = tiny_config();
  semi.semi_supervised = true;
  EXPECT_THROW(train(semi, data, nullptr, {}), ConfigError);
  EXPECT_THROW(train(tiny_config(), data, &data, {}), ConfigError);
}

TEST(Trainer, RejectsBadDatasets) {
  EXPECT_THROW(train(tiny_config(), {}, nullptr, {}), DataError);
  std::vector<SampleTriplet> big{gen_synthetic_sample(1, 64)};
  big[0].name = "big.ppm";
  try {
    train(tiny_config(), big, nullptr, {});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("big.ppm"), std::string::npos) << e.what();
  }
}

TEST(Trainer, NaNAbortsNamingTheLoss) {
  auto data = samples(2);
  for (auto& t : data) t.matte->pixels[3] = std::numeric_limits<float>::quiet_NaN();
  try {
    train(tiny_config(), data, nullptr, {});
    FAIL() << "expected a NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("l_det"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("iteration 1"), std::string::npos) << e.what();
  }
}

TEST(Trainer, CheckpointRoundTripInfersBitwise) {
  const auto data = samples(2);
  const fs::path path = fs::temp_directory_path() / "argan_trainer_roundtrip.ckpt";
  TrainOptions opt;
  opt.checkpoint_path = path.string();
  auto model = train(tiny_config(), data, nullptr, opt);
  const auto x = image_to_tensor<float>(data[0].shadow);
  const auto before = flat_outputs(model->infer(x));
  const auto loaded = Model::load(path.string());
  EXPECT_EQ(flat_outputs(loaded->infer(x)), before);
  // Training continues identically from the restored state.
  Trainer t1(*model, data), t2(*loaded, data);
  EXPECT_EQ(format_log_row(t1.step()), format_log_row(t2.step()));
  fs::remove(path);
}

TEST(Trainer, LogPathSitsNextToCheckpoint) {
  EXPECT_EQ(log_path_for("out/model.ckpt"), "out/model.log.csv");
  EXPECT_EQ(log_path_for("model"), "model.log.csv");
}

TEST(BatchSampler, EachEpochVisitsEveryIndexOnce) {
  BatchSampler s(6, 3, 9);
  std::multiset<int> seen;
  for (int k = 0; k < 4; ++k)
    for (int i : s.next()) seen.insert(i);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(seen.count(i), 2u);
  BatchSampler a(5, 2, 1), b(5, 2, 1);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(a.next(), b.next());
  EXPECT_THROW(BatchSampler(0, 2, 1), std::invalid_argument);
}

TEST(Scores, IdentityBaselines) {
  ArganConfig cfg = tiny_config();
  Model model(cfg);
  const auto data = samples(3);
  const DatasetScores s = score_dataset(model, data);
  EXPECT_DOUBLE_EQ(s.identity_ber, 50.0);
  EXPECT_GT(s.identity_shadow, 0.0);
  EXPECT_GE(s.ber, 0.0);
  EXPECT_LE(s.ber, 100.0);
}
