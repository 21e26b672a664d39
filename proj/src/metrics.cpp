#include "argan/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace argan {

namespace {

constexpr double kXn = 0.95047, kYn = 1.0, kZn = 1.08883;
constexpr double kDelta = 6.0 / 29.0;

void require_binary_gray(const Image& m, const char* who) {
  if (m.channels != 1) throw DataError(std::string(who) + ": mask must be single-channel");
  for (float v : m.pixels) {
    if (v != 0.0f && v != 1.0f) throw DataError(std::string(who) + ": mask is not binary");
  }
}

void require_same_size(const Image& a, const Image& b, const char* who) {
  if (a.width != b.width || a.height != b.height) {
    throw DataError(std::string(who) + ": dimension mismatch " + std::to_string(a.width) + "x" +
                    std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
  }
}

double srgb_decode(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }
double srgb_encode(double c) { return c <= 0.0031308 ? c * 12.92 : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055; }

double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}
double lab_f_inv(double f) { return f > kDelta ? f * f * f : 3.0 * kDelta * kDelta * (f - 4.0 / 29.0); }

Lab pixel_lab(const Image& im, std::size_t i) {
  return rgb_to_lab(im.pixels[i * 3], im.pixels[i * 3 + 1], im.pixels[i * 3 + 2]);
}

}  // namespace

BerResult ber(const Image& pred, const Image& gt) {
  require_same_size(pred, gt, "ber");
  require_binary_gray(pred, "ber");
  require_binary_gray(gt, "ber");
  long tp = 0, tn = 0, np = 0, nn = 0;
  for (std::size_t i = 0; i < gt.pixels.size(); ++i) {
    const bool g = gt.pixels[i] == 1.0f, p = pred.pixels[i] == 1.0f;
    if (g) {
      ++np;
      tp += p;
    } else {
      ++nn;
      tn += !p;
    }
  }
  BerResult r;
  const double tpr = np ? static_cast<double>(tp) / np : 1.0;
  const double tnr = nn ? static_cast<double>(tn) / nn : 1.0;
  r.degenerate = np == 0 || nn == 0;
  r.percent = (1.0 - 0.5 * (tpr + tnr)) * 100.0;
  return r;
}

Lab rgb_to_lab(double r, double g, double b) {
  const double lr = srgb_decode(std::clamp(r, 0.0, 1.0));
  const double lg = srgb_decode(std::clamp(g, 0.0, 1.0));
  const double lb = srgb_decode(std::clamp(b, 0.0, 1.0));
  const double x = 0.4124564 * lr + 0.3575761 * lg + 0.1804375 * lb;
  const double y = 0.2126729 * lr + 0.7151522 * lg + 0.0721750 * lb;
  const double z = 0.0193339 * lr + 0.1191920 * lg + 0.9503041 * lb;
  const double fx = lab_f(x / kXn), fy = lab_f(y / kYn), fz = lab_f(z / kZn);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

std::array<double, 3> lab_to_rgb(const Lab& lab) {
  const double fy = (lab[0] + 16.0) / 116.0;
  const double fx = fy + lab[1] / 500.0;
  const double fz = fy - lab[2] / 200.0;
  const double x = kXn * lab_f_inv(fx), y = kYn * lab_f_inv(fy), z = kZn * lab_f_inv(fz);
  const double lr = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z;
  const double lg = -0.9692660 * x + 1.8760108 * y + 0.0415560 * z;
  const double lb = 0.0556434 * x - 0.2040259 * y + 1.0572252 * z;
  return {srgb_encode(lr), srgb_encode(lg), srgb_encode(lb)};
}

const char* region_name(Region r) {
  switch (r) {
    case Region::shadow:
      return "shadow";
    case Region::nonshadow:
      return "nonshadow";
    case Region::all:
      return "all";
  }
  return "?";
}

double rmse_lab(const Image& pred, const Image& gt, const Image& mask, Region region) {
  require_same_size(pred, gt, "rmse_lab");
  require_same_size(pred, mask, "rmse_lab");
  if (pred.channels != 3 || gt.channels != 3) throw DataError("rmse_lab: images must be RGB");
  require_binary_gray(mask, "rmse_lab");
  double sum = 0.0;
  long count = 0;
  for (std::size_t i = 0; i < mask.pixels.size(); ++i) {
    const bool in_shadow = mask.pixels[i] == 1.0f;
    if ((region == Region::shadow && !in_shadow) || (region == Region::nonshadow && in_shadow)) continue;
    const Lab a = pixel_lab(pred, i), b = pixel_lab(gt, i);
    for (int c = 0; c < 3; ++c) sum += (a[c] - b[c]) * (a[c] - b[c]);
    ++count;
  }
  if (count == 0) throw DataError(std::string("rmse_lab: empty ") + region_name(region) + " region");
  return std::sqrt(sum / (3.0 * count));
}

MetricReport region_report(const Image& pred, const Image& gt, const Image& mask) {
  require_same_size(pred, gt, "region_report");
  require_same_size(pred, mask, "region_report");
  if (pred.channels != 3 || gt.channels != 3) throw DataError("region_report: images must be RGB");
  require_binary_gray(mask, "region_report");
  double s_sum = 0.0, n_sum = 0.0;
  MetricReport r;
  for (std::size_t i = 0; i < mask.pixels.size(); ++i) {
    const Lab a = pixel_lab(pred, i), b = pixel_lab(gt, i);
    double d = 0.0;
    for (int c = 0; c < 3; ++c) d += (a[c] - b[c]) * (a[c] - b[c]);
    if (mask.pixels[i] == 1.0f) {
      s_sum += d;
      ++r.shadow_pixels;
    } else {
      n_sum += d;
      ++r.nonshadow_pixels;
    }
  }
  const long total = r.shadow_pixels + r.nonshadow_pixels;
  r.rmse_shadow = r.shadow_pixels ? std::sqrt(s_sum / (3.0 * r.shadow_pixels)) : 0.0;
  r.rmse_nonshadow = r.nonshadow_pixels ? std::sqrt(n_sum / (3.0 * r.nonshadow_pixels)) : 0.0;
  r.rmse_all = std::sqrt((s_sum + n_sum) / (3.0 * total));
  if (r.shadow_pixels && r.nonshadow_pixels) {
    const double lo = std::min(r.rmse_shadow, r.rmse_nonshadow), hi = std::max(r.rmse_shadow, r.rmse_nonshadow);
    if (r.rmse_all < lo * (1 - 1e-12) || r.rmse_all > hi * (1 + 1e-12)) {
      throw std::logic_error("region_report: whole-image RMSE outside the regional range");
    }
  }
  return r;
}

}  // namespace argan
