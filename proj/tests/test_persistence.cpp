#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "argan/checkpoint.hpp"
#include "argan/config.hpp"
#include "argan/optim.hpp"
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
  c.iterations = 2;
  return c;
}

std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("argan_persist_" + name); }

}  // namespace

TEST(Config, DefaultsAndRoundTrip) {
  const ArganConfig d = parse_config("");
  EXPECT_EQ(d, ArganConfig{});
  EXPECT_EQ(d.N, 3);
  EXPECT_EQ(d.lambda, 0.7);
  EXPECT_EQ(d.lr, 2e-4);
  ArganConfig c = tiny_config();
  c.lambda = 0.1 + 0.2;  // not representable in a short decimal
  c.seed = 18446744073709551615ULL;
  c.semi_supervised = true;
  EXPECT_EQ(parse_config(serialize_config(c)), c);
}

TEST(Config, ParsesCommentsAndWhitespace) {
  const ArganConfig c = parse_config("# overfit\n  N = 1   # one step\n\nshare_weights=false\nlr = 1e-3\n");
  EXPECT_EQ(c.N, 1);
  EXPECT_FALSE(c.share_weights);
  EXPECT_EQ(c.lr, 1e-3);
}

TEST(Config, ErrorsNameTheLine) {
  EXPECT_NE(config_error("N = 3\nfoo = 1\n").find("line 2"), std::string::npos);
  EXPECT_NE(config_error("N = 3\nfoo = 1\n").find("foo"), std::string::npos);
  EXPECT_NE(config_error("N = 3\nN = 2\n").find("duplicate"), std::string::npos);
  EXPECT_NE(config_error("lr = fast\n").find("lr"), std::string::npos);
  EXPECT_NE(config_error("N\n").find("line 1"), std::string::npos);
  EXPECT_NE(config_error("share_weights = maybe\n").find("share_weights"), std::string::npos);
}

TEST(Config, ValidationRules) {
  EXPECT_NE(config_error("N = 0").find("N"), std::string::npos);
  EXPECT_NE(config_error("lambda = 1.5").find("lambda"), std::string::npos);
  EXPECT_NE(config_error("image_size = 48").find("32"), std::string::npos);
  EXPECT_NE(config_error("depth = 6").find("64"), std::string::npos);
  EXPECT_NE(config_error("lr = 0").find("lr"), std::string::npos);
  EXPECT_NE(config_error("momentum_mu = 1").find("momentum_mu"), std::string::npos);
  EXPECT_NO_THROW(parse_config("depth = 6\nimage_size = 64"));
  EXPECT_THROW(load_config("/nonexistent/argan.cfg"), ConfigError);
}

TEST(Optim, MomentumScalarTrace) {
  // v' = 0.9 v + 1, p' = p - 0.1 v'
  std::vector<double> p{1.0}, v{0.0};
  const std::vector<double> g{1.0};
  const double expect[] = {0.9, 0.71, 0.439};
  for (double e : expect) {
    momentum_step<double>(p, g, v, 0.1, 0.9);
    EXPECT_NEAR(p[0], e, 1e-15);
  }
}

TEST(Optim, AdamScalarTrace) {
  std::vector<double> p{1.0}, m{0.0}, v{0.0};
  const double grads[] = {1.0, -2.0, 0.5};
  double em = 0.0, ev = 0.0, ep = 1.0;
  for (int t = 1; t <= 3; ++t) {
    const double g = grads[t - 1];
    adam_step<double>(p, std::vector<double>{g}, m, v, t, 0.01, 0.9, 0.999, 1e-8);
    em = 0.9 * em + 0.1 * g;
    ev = 0.999 * ev + 0.001 * g * g;
    ep -= 0.01 * (em / (1 - std::pow(0.9, t))) / (std::sqrt(ev / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(p[0], ep, 1e-15) << "t = " << t;
  }
  // The first step moves by lr regardless of the gradient's scale.
  std::vector<double> q{0.0}, m2{0.0}, v2{0.0};
  adam_step<double>(q, std::vector<double>{1e-3}, m2, v2, 1, 0.01, 0.9, 0.999, 1e-8);
  EXPECT_NEAR(q[0], -0.01, 1e-6);
  EXPECT_THROW(adam_step<double>(q, std::vector<double>{1.0}, m2, v2, 0, 0.01, 0.9, 0.999, 1e-8),
               std::invalid_argument);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  Model model(tiny_config());
  const auto bytes = encode_checkpoint(model.config, model.state());
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "ARGN");
  const CheckpointData back = decode_checkpoint(bytes);
  EXPECT_EQ(back.config, model.config);
  EXPECT_EQ(encode_checkpoint(back.config, back.tensors), bytes);

  const fs::path path = temp_file("roundtrip.ckpt");
  model.save(path.string());
  const auto loaded = Model::load(path.string());
  EXPECT_EQ(encode_checkpoint(loaded->config, loaded->state()), bytes);
  fs::remove(path);
}

TEST(Checkpoint, TruncationNamesTheOffset) {
  Model model(tiny_config());
  auto bytes = encode_checkpoint(model.config, model.state());
  bytes.resize(bytes.size() - 3);
  try {
    decode_checkpoint(bytes);
    FAIL() << "expected a CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos) << e.what();
  }
  std::vector<std::uint8_t> header(bytes.begin(), bytes.begin() + 6);
  EXPECT_THROW(decode_checkpoint(header), CheckpointError);
}

TEST(Checkpoint, BadMagicAndVersion) {
  Model model(tiny_config());
  auto bytes = encode_checkpoint(model.config, model.state());
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic), CheckpointError);
  auto version = bytes;
  version[4] = 9;
  try {
    decode_checkpoint(version);
    FAIL() << "expected a CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version 9"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, RestoreErrorsNameTheTensor) {
  Model a(tiny_config());
  NamedTensors<float> loaded;
  for (const auto& [n, t] : a.state()) loaded.emplace_back(n, t.clone());
  auto missing = loaded;
  const std::string dropped = missing.back().first;
  missing.pop_back();
  try {
    restore_tensors(a.state(), missing);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find(dropped), std::string::npos) << e.what();
  }
  auto reshaped = loaded;
  reshaped[0].second = Tensor<float>::zeros({1, 2, 3});
  try {
    restore_tensors(a.state(), reshaped);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find(loaded[0].first), std::string::npos) << e.what();
  }
  auto extra = loaded;
  extra.emplace_back("stray.weight", Tensor<float>::zeros({1}));
  EXPECT_THROW(restore_tensors(a.state(), extra), CheckpointError);
}

TEST(Checkpoint, StateCoversOptimizerAndBuffers) {
  Model model(tiny_config());
  bool velocity = false, moment = false, running = false, spectral = false;
  for (const auto& [n, t] : model.state()) {
    velocity |= n.find("velocity") != std::string::npos;
    moment |= n.rfind("opt_d", 0) == 0;
    running |= n.find("running_mean") != std::string::npos;
    spectral |= n.find(".u") != std::string::npos;
  }
  EXPECT_TRUE(velocity);
  EXPECT_TRUE(moment);
  EXPECT_TRUE(running);
  EXPECT_TRUE(spectral);
}

TEST(Checkpoint, MissingFileIsAnError) { EXPECT_THROW(load_checkpoint("/nonexistent/x.ckpt"), CheckpointError); }
