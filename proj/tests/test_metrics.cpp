#include <gtest/gtest.h>

#include <cmath>

#include "argan/metrics.hpp"
#include "argan/rng.hpp"

using namespace argan;

namespace {

Image mask_from(int w, int h, std::vector<float> v) {
  Image m(w, h, 1);
  m.pixels = std::move(v);
  return m;
}

Image random_rgb(int size, Rng& rng) {
  Image im(size, size, 3);
  for (float& v : im.pixels) v = static_cast<float>(rng.uniform());
  return im;
}

}  // namespace

TEST(Ber, UnitCases) {
  const Image gt = mask_from(2, 2, {1, 1, 0, 0});
  EXPECT_EQ(ber(gt, gt).percent, 0.0);
  EXPECT_EQ(ber(mask_from(2, 2, {1, 1, 1, 1}), gt).percent, 50.0);
  // Np = 2, Nn = 2, TP = 1, FN = 1, TN = 2, FP = 0
  EXPECT_EQ(ber(mask_from(2, 2, {1, 0, 0, 0}), gt).percent, 25.0);
  EXPECT_FALSE(ber(gt, gt).degenerate);
}

TEST(Ber, DegenerateClassIsFlagged) {
  const Image none = mask_from(2, 1, {0, 0});
  const BerResult r = ber(none, none);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.percent, 0.0);
  EXPECT_EQ(ber(mask_from(2, 1, {1, 0}), none).percent, 25.0);
}

TEST(Ber, RangeAndLabelSwapInvariance) {
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    Image p(8, 8, 1), g(8, 8, 1);
    for (std::size_t i = 0; i < p.pixels.size(); ++i) {
      p.pixels[i] = rng.uniform() < 0.5 ? 1.0f : 0.0f;
      g.pixels[i] = rng.uniform() < 0.3 ? 1.0f : 0.0f;
    }
    const double b = ber(p, g).percent;
    EXPECT_GE(b, 0.0);
    EXPECT_LE(b, 100.0);
    Image ps = p, gs = g;
    for (float& v : ps.pixels) v = 1.0f - v;
    for (float& v : gs.pixels) v = 1.0f - v;
    EXPECT_NEAR(ber(ps, gs).percent, b, 1e-12);
  }
}

TEST(Ber, RejectsBadMasks) {
  EXPECT_THROW(ber(mask_from(2, 1, {0.5f, 0}), mask_from(2, 1, {0, 1})), DataError);
  EXPECT_THROW(ber(Image(2, 2, 1), Image(2, 3, 1)), DataError);
  EXPECT_THROW(ber(Image(2, 2, 3), Image(2, 2, 3)), DataError);
}

TEST(Lab, ReferencePoints) {
  const Lab white = rgb_to_lab(1, 1, 1);
  EXPECT_NEAR(white[0], 100.0, 1e-2);
  EXPECT_NEAR(white[1], 0.0, 1e-2);
  EXPECT_NEAR(white[2], 0.0, 1e-2);
  const Lab black = rgb_to_lab(0, 0, 0);
  for (double v : black) EXPECT_NEAR(v, 0.0, 1e-12);
  const double g = 119.0 / 255.0;
  const Lab gray = rgb_to_lab(g, g, g);
  EXPECT_NEAR(gray[0], 50.0, 0.2);
  EXPECT_NEAR(gray[1], 0.0, 1e-2);
  EXPECT_NEAR(gray[2], 0.0, 1e-2);
  // inputs are clamped
  EXPECT_EQ(rgb_to_lab(2, 2, 2), white);
}

TEST(Lab, GrayLevelsRoundTrip) {
  for (int k = 0; k < 256; ++k) {
    const double v = k / 255.0;
    const auto back = lab_to_rgb(rgb_to_lab(v, v, v));
    for (double c : back) EXPECT_NEAR(c, v, 0.5 / 255.0) << k;
  }
}

TEST(Rmse, IdenticalImagesScoreZero) {
  Rng rng(1);
  const Image a = random_rgb(8, rng);
  Image m(8, 8, 1);
  for (std::size_t i = 0; i < 32; ++i) m.pixels[i] = 1.0f;
  for (Region r : {Region::shadow, Region::nonshadow, Region::all}) EXPECT_EQ(rmse_lab(a, a, m, r), 0.0);
}

TEST(Rmse, LightnessShiftOfOne) {
  Rng rng(2);
  Image gt(6, 6, 3), pred(6, 6, 3);
  for (std::size_t i = 0; i < 36; ++i) {
    const Lab lab{rng.uniform(30.0, 70.0), rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0)};
    const auto a = lab_to_rgb(lab);
    const auto b = lab_to_rgb({lab[0] + 1.0, lab[1], lab[2]});
    for (int c = 0; c < 3; ++c) {
      gt.pixels[i * 3 + c] = static_cast<float>(a[c]);
      pred.pixels[i * 3 + c] = static_cast<float>(b[c]);
    }
  }
  // float storage of the constructed pixels limits the match to about 1e-4
  EXPECT_NEAR(rmse_lab(pred, gt, Image(6, 6, 1), Region::all), 1.0 / std::sqrt(3.0), 1e-3);
}

TEST(Rmse, RegionPartitionIdentity) {
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    const Image a = random_rgb(16, rng), b = random_rgb(16, rng);
    Image m(16, 16, 1);
    for (float& v : m.pixels) v = rng.uniform() < 0.3 ? 1.0f : 0.0f;
    double np = 0.0;
    for (float v : m.pixels) np += v;
    const double nn = 256.0 - np;
    const double s = rmse_lab(a, b, m, Region::shadow), n = rmse_lab(a, b, m, Region::nonshadow);
    const double all = rmse_lab(a, b, m, Region::all);
    const double lhs = np * s * s + nn * n * n, rhs = 256.0 * all * all;
    EXPECT_LE(std::abs(lhs - rhs) / rhs, 1e-9);
    const MetricReport r = region_report(a, b, m);
    EXPECT_NEAR(r.rmse_shadow, s, 1e-12);
    EXPECT_NEAR(r.rmse_nonshadow, n, 1e-12);
    EXPECT_NEAR(r.rmse_all, all, 1e-12);
    EXPECT_EQ(r.shadow_pixels, static_cast<long>(np));
  }
}

TEST(Rmse, EmptyRegionNamesIt) {
  Rng rng(1);
  const Image a = random_rgb(4, rng);
  try {
    rmse_lab(a, a, Image(4, 4, 1), Region::shadow);
    FAIL() << "expected a DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("shadow"), std::string::npos);
  }
  const MetricReport r = region_report(a, a, Image(4, 4, 1));
  EXPECT_EQ(r.shadow_pixels, 0);
  EXPECT_EQ(r.rmse_shadow, 0.0);
}
