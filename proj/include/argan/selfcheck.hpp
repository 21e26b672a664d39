#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "argan/layers.hpp"

namespace argan::check {

/// Max over components of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
/// using central differences with step eps on every element of every leaf.
/// `f` must return a single-element tensor and is re-evaluated for each probe.
double grad_check(const std::function<Tensor<double>()>& f, const std::vector<Tensor<double>>& leaves,
                  double eps = 1e-4);
double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f, const Tensor<double>& x,
                  double eps = 1e-4);

Tensor<double> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0);

// Direct-loop references.
Tensor<double> naive_conv2d(const Tensor<double>& x, const ConvParams<double>& p);
Tensor<double> naive_deconv2d(const Tensor<double>& x, const ConvParams<double>& p);
/// Largest singular value of the [dim(0) x rest] view, via a full SVD.
double svd_sigma_max(const Tensor<double>& w);

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;  // worst observed error
  double limit = 0.0;
  std::string detail;
};

/// One differentiable op; `run` builds seeded random inputs and returns the
/// grad_check error.
struct GradCase {
  std::string name;
  std::function<double(std::uint64_t seed)> run;
};

std::vector<GradCase> gradient_cases();
std::vector<CheckResult> gradient_suite(int seeds = 20, double limit = 1e-4);

// Kernel/stride/pad combinations the networks use, each checked against the
// direct loops.
CheckResult conv_oracle_check();
CheckResult deconv_oracle_check();
CheckResult deconv_adjoint_check();
CheckResult spectral_svd_check();
CheckResult lab_roundtrip_check();

/// Everything above, gradient suite first.
std::vector<CheckResult> run_selfcheck(int seeds = 20);

}  // namespace argan::check
