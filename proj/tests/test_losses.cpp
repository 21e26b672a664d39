#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "argan/losses.hpp"
#include "argan/networks.hpp"
#include "argan/ops.hpp"
#include "argan/selfcheck.hpp"

using namespace argan;
using Td = Tensor<double>;

namespace {

Td rand_t(const Shape& s, Rng& rng, double lo = 0.0, double hi = 1.0) { return check::random_tensor(s, rng, lo, hi); }

bool bitwise_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

TEST(BetaWeight, ExactPowers) {
  EXPECT_EQ(beta_weight(3, 3), 0.7);
  EXPECT_EQ(beta_weight(1, 3), std::pow(0.7, 3));
  EXPECT_NEAR(beta_weight(1, 3), 0.343, 1e-15);
  for (int n = 1; n <= 8; ++n) {
    for (int i = 1; i <= n; ++i) {
      EXPECT_EQ(beta_weight(i, n), std::pow(0.7, n - i + 1));
      if (i > 1) {
        EXPECT_GT(beta_weight(i, n), beta_weight(i - 1, n));
      }
    }
  }
  EXPECT_THROW(beta_weight(0, 3), std::invalid_argument);
  EXPECT_THROW(beta_weight(4, 3), std::invalid_argument);
}

TEST(LossDet, Examples) {
  const Td m = Td::zeros({1, 1, 4, 4});
  EXPECT_DOUBLE_EQ(loss_det<double>({Td::full({1, 1, 4, 4}, 0.5)}, m).item(), 0.175);
  EXPECT_EQ(loss_det<double>({m, m, m}, m).item(), 0.0);
  EXPECT_THROW(loss_det<double>({Td::zeros({1, 1, 4, 5})}, m), ShapeError);
}

TEST(LossDet, EqualsHandSummedSteps) {
  Rng rng(4);
  const Td m = rand_t({2, 1, 6, 6}, rng);
  std::vector<Td> att;
  for (int i = 0; i < 3; ++i) att.push_back(rand_t({2, 1, 6, 6}, rng));
  double expect = 0.0;
  for (int i = 0; i < 3; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < m.numel(); ++k) s += (att[i].at(k) - m.at(k)) * (att[i].at(k) - m.at(k));
    expect += std::pow(0.7, 3 - i) * s / static_cast<double>(m.numel());
  }
  EXPECT_NEAR(loss_det(att, m).item(), expect, 1e-14);
}

TEST(LossRem, ZeroAtTargetAndPositiveOtherwise) {
  Rng rng(5);
  const Td f = rand_t({1, 3, 8, 8}, rng);
  FeatureExtractor<double> fx, other(1234);
  for (const auto* e : {&fx, &other}) {
    const auto r = loss_rem<double>({f, f}, f, *e);
    EXPECT_EQ(r.mse.item(), 0.0);
    EXPECT_EQ(r.per.item(), 0.0);
  }
  const auto r = loss_rem<double>({rand_t({1, 3, 8, 8}, rng)}, f, fx);
  EXPECT_GT(r.mse.item(), 0.0);
  EXPECT_GT(r.per.item(), 0.0);
}

TEST(LossRem, PerceptualTermCarriesNoBeta) {
  Rng rng(6);
  const Td f = rand_t({1, 3, 8, 8}, rng), o = rand_t({1, 3, 8, 8}, rng);
  FeatureExtractor<double> fx;
  const auto one = loss_rem<double>({o}, f, fx);
  const auto two = loss_rem<double>({o, o}, f, fx);
  EXPECT_NEAR(two.per.item(), 2.0 * one.per.item(), 1e-14);
  // beta: 0.7 for a single step, 0.49 + 0.7 for two
  EXPECT_NEAR(two.mse.item(), one.mse.item() / 0.7 * (0.49 + 0.7), 1e-14);
}

TEST(FeatureExtractor, FrozenAndSeeded) {
  FeatureExtractor<double> a, b, c(99);
  const auto wa = a.weights(), wb = b.weights(), wc = c.weights();
  ASSERT_EQ(wa.size(), 6u);
  for (const auto& [name, t] : wa) EXPECT_FALSE(t.requires_grad()) << name;
  EXPECT_EQ(wa[0].second.shape(), (Shape{16, 3, 3, 3}));
  EXPECT_EQ(wa[4].second.shape(), (Shape{64, 32, 3, 3}));
  for (std::size_t i = 0; i < wa[0].second.numel(); ++i) EXPECT_EQ(wa[0].second.at(i), wb[0].second.at(i));
  EXPECT_NE(wa[0].second.at(0), wc[0].second.at(0));
  EXPECT_EQ(a.forward(Td::zeros({1, 3, 8, 8})).shape(), (Shape{1, 64, 1, 1}));
}

TEST(FeatureExtractor, LoadChecksShapes) {
  FeatureExtractor<double> a, b(7);
  a.load(b.weights());
  EXPECT_EQ(a.weights()[0].second.at(0), b.weights()[0].second.at(0));
  auto bad = b.weights();
  bad[0].second = Td::zeros({16, 3, 5, 5});
  EXPECT_THROW(a.load(bad), ShapeError);
}

TEST(LossAdv, HalfProbabilities) {
  const Td half = Td::full({4, 1}, 0.5);
  const auto r = loss_adv<double>(half, half, std::nullopt, 0.7);
  EXPECT_NEAR(r.d_loss.item(), 2.0 * std::log(2.0), 1e-15);
  EXPECT_NEAR(r.g_loss.item(), std::log(2.0), 1e-15);
}

TEST(LossAdv, FrozenValues) {
  const Td real = Td::from({2, 1}, {0.9, 0.8});
  const Td fake = Td::from({2, 1}, {0.2, 0.4});
  const Td unsup = Td::from({2, 1}, {0.3, 0.6});
  const auto sup = loss_adv<double>(real, fake, std::nullopt, 0.7);
  const double d_sup = -0.5 * (std::log(0.9) + std::log(0.8) + std::log(0.8) + std::log(0.6));
  EXPECT_NEAR(sup.d_loss.item(), d_sup, 1e-14);
  EXPECT_NEAR(sup.g_loss.item(), -0.5 * (std::log(0.2) + std::log(0.4)), 1e-14);
  const auto semi = loss_adv<double>(real, fake, unsup, 0.7);
  EXPECT_NEAR(semi.d_loss.item(), 0.7 * d_sup - 0.3 * 0.5 * (std::log(0.7) + std::log(0.4)), 1e-14);
  EXPECT_NEAR(semi.g_loss.item(),
              -0.7 * 0.5 * (std::log(0.2) + std::log(0.4)) - 0.3 * 0.5 * (std::log(0.3) + std::log(0.6)), 1e-14);
}

TEST(LossAdv, LambdaOneIsBitwiseSupervised) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const Td real = rand_t({4, 1}, rng, 0.01, 0.99), fake = rand_t({4, 1}, rng, 0.01, 0.99);
    const Td unsup = rand_t({3, 1}, rng, 0.01, 0.99);
    const auto sup = loss_adv<double>(real, fake, std::nullopt, 1.0);
    const auto semi = loss_adv<double>(real, fake, unsup, 1.0);
    EXPECT_TRUE(bitwise_equal(sup.d_loss.item(), semi.d_loss.item()));
    EXPECT_TRUE(bitwise_equal(sup.g_loss.item(), semi.g_loss.item()));
  }
  // Same in single precision, the type training uses.
  Rng rng(3);
  const auto real = rand_t({4, 1}, rng, 0.01, 0.99).cast<float>(), fake = rand_t({4, 1}, rng, 0.01, 0.99).cast<float>();
  const auto unsup = rand_t({4, 1}, rng, 0.01, 0.99).cast<float>();
  const float a = loss_adv<float>(real, fake, std::nullopt, 1.0).d_loss.item();
  const float b = loss_adv<float>(real, fake, unsup, 1.0).d_loss.item();
  EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
}

TEST(LossAdv, ClampsAndValidates) {
  const Td zero = Td::zeros({2, 1}), one = Td::ones({2, 1});
  const auto r = loss_adv<double>(zero, one, std::nullopt, 0.5);
  EXPECT_TRUE(std::isfinite(r.d_loss.item()));
  EXPECT_NEAR(r.d_loss.item(), -2.0 * std::log(1e-7), 1e-6);
  EXPECT_THROW(loss_adv<double>(zero, zero, zero, 1.5), std::invalid_argument);
  EXPECT_THROW(loss_adv<double>(zero, zero, zero, -0.1), std::invalid_argument);
}

TEST(LossTotal, SumsGeneratorParts) {
  LossBreakdown<double> p;
  p.l_det = Td::scalar(1.0);
  p.l_rem_mse = Td::scalar(2.0);
  p.l_rem_per = Td::scalar(3.0);
  p.l_adv_g = Td::scalar(4.0);
  p.l_adv_d = Td::scalar(100.0);
  EXPECT_EQ(loss_total(p).item(), 10.0);
  p.l_det = p.l_rem_mse = p.l_rem_per = p.l_adv_g = Td::scalar(0.0);
  EXPECT_EQ(loss_total(p).item(), 0.0);
}

TEST(LossTotal, MatchesRecomputationFromRawTensors) {
  Rng rng(8);
  std::vector<Td> att, out;
  for (int i = 0; i < 3; ++i) {
    att.push_back(rand_t({2, 1, 8, 8}, rng));
    out.push_back(rand_t({2, 3, 8, 8}, rng));
  }
  const Td m = rand_t({2, 1, 8, 8}, rng), f = rand_t({2, 3, 8, 8}, rng), fake = rand_t({2, 1}, rng, 0.1, 0.9);
  FeatureExtractor<double> fx;
  LossBreakdown<double> p;
  p.l_det = loss_det(att, m);
  const auto rem = loss_rem(out, f, fx);
  p.l_rem_mse = rem.mse;
  p.l_rem_per = rem.per;
  p.l_adv_g = loss_adv<double>(Td::full({2, 1}, 0.5), fake, std::nullopt, 0.7).g_loss;
  const double expect = p.l_det.item() + p.l_rem_mse.item() + p.l_rem_per.item() + p.l_adv_g.item();
  EXPECT_NEAR(loss_total(p).item(), expect, 1e-14);
}

// End-to-end gradient of the generator-side losses with respect to the input
// image, at d = 2, 8x8, N = 2.
TEST(Pipeline, LossesDifferentiableThroughGenerator) {
  NetConfig c;
  c.image_size = 8;
  c.depth = 2;
  c.steps = 2;
  c.base_channels = 2;
  c.channel_cap = 4;
  c.detector_channels = 2;
  c.detector_layers = 1;
  Rng rng(21);
  Generator<double> gen(c, rng);
  FeatureExtractor<double> fx;
  Td image = param(rand_t({2, 3, 8, 8}, rng, 0.2, 0.5));
  const Td m = rand_t({2, 1, 8, 8}, rng), f = rand_t({2, 3, 8, 8}, rng);
  auto f_total = [&](const Td& x) {
    const auto states = gen.forward(x);
    std::vector<Td> att, out;
    for (const auto& s : states) {
      att.push_back(s.attention);
      out.push_back(s.output);
    }
    const auto rem = loss_rem(out, f, fx);
    return add(add(loss_det(att, m), rem.mse), rem.per);
  };
  // small probe: see the remover gradient test for why
  EXPECT_LE(check::grad_check(f_total, image, 1e-5), 1e-3);
}

}  // namespace
