#pragma once

#include <array>
#include <string>

#include "argan/data.hpp"

namespace argan {

struct BerResult {
  double percent = 0.0;
  // Set when the ground truth has no positives or no negatives; the missing
  // rate then counts as perfect.
  bool degenerate = false;
};

/// 100 * (1 - (TP/Np + TN/Nn) / 2) on binary single-channel masks.
BerResult ber(const Image& pred_mask, const Image& gt_mask);

using Lab = std::array<double, 3>;

/// sRGB in [0,1] (clamped) to CIELAB under D65.
Lab rgb_to_lab(double r, double g, double b);
/// Inverse of rgb_to_lab; the result is not clamped.
std::array<double, 3> lab_to_rgb(const Lab& lab);

enum class Region { shadow, nonshadow, all };
const char* region_name(Region r);

/// Root mean square LAB difference over the pixels the region selects from a
/// binary mask and over all three channels.
double rmse_lab(const Image& pred, const Image& gt, const Image& mask, Region region);

struct MetricReport {
  double ber = 0.0;
  double rmse_shadow = 0.0;
  double rmse_nonshadow = 0.0;
  double rmse_all = 0.0;
  long shadow_pixels = 0;
  long nonshadow_pixels = 0;
};

/// All three regional RMSEs in one pass; a region without pixels reports 0.
/// Checks that the shadow and non-shadow sums add up to the whole image.
MetricReport region_report(const Image& pred, const Image& gt, const Image& mask);

}  // namespace argan
