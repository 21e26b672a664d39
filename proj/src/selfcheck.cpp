#include "argan/selfcheck.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <stdexcept>

#include "argan/losses.hpp"
#include "argan/metrics.hpp"
#include "argan/ops.hpp"

namespace argan::check {

namespace {

using Td = Tensor<double>;

Td leaf(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return param(random_tensor(shape, rng, lo, hi));
}

// Values with |v| in [0.1, 1] so kinks at zero stay out of reach of the probes.
Td leaf_off_zero(const Shape& shape, Rng& rng) {
  Td t = Td::zeros(shape);
  for (double& v : t.data_mut()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
  return param(t);
}

// Seed of the output weights; unrelated to the small seeds used for inputs.
constexpr std::uint64_t kWeightSeed = 0x9E3779B97F4A7C15ULL;

// sum(y * r) for a fixed random r, so every output element gets its own weight.
Td weighted_sum(const Td& y, Rng& rng) { return sum(mul(y, random_tensor(y.shape(), rng))); }

ConvParams<double> conv_leaves(int in, int out, int k, int stride, int pad, Rng& rng) {
  ConvParams<double> p;
  p.weight = leaf({out, in, k, k}, rng);
  p.bias = leaf({out}, rng);
  p.stride = stride;
  p.padding = pad;
  return p;
}

ConvParams<double> deconv_leaves(int in, int out, int k, int stride, int pad, Rng& rng) {
  ConvParams<double> p;
  p.weight = leaf({in, out, k, k}, rng);
  p.bias = leaf({out}, rng);
  p.stride = stride;
  p.padding = pad;
  return p;
}

// Pre-activations closer to zero than this would let a probe step across
// the LeakyReLU kink, where the central difference is meaningless.
constexpr double kKinkMargin = 1e-3;
constexpr int kMaxRedraws = 1000;

double min_abs(const Td& t) {
  double m = INFINITY;
  for (double v : t.data()) m = std::min(m, std::abs(v));
  return m;
}

// Smallest |pre-activation| the feature extractor sees for `image`.
double feature_margin(const FeatureExtractor<double>& fx, const Td& image) {
  NoGradGuard guard;
  const NamedTensors<double> w = fx.weights();
  double m = INFINITY;
  Td x = image;
  for (std::size_t i = 0; i + 1 < w.size(); i += 2) {
    ConvParams<double> p{w[i].second, w[i + 1].second, 2, 1};
    const Td pre = conv2d(x, p);
    m = std::min(m, min_abs(pre));
    x = leaky_relu(pre, 0.2);
  }
  return m;
}

[[noreturn]] void no_smooth_draw(const char* what) {
  throw std::runtime_error(std::string(what) + ": no draw kept its pre-activations off the kink");
}

// Random [1, 3, 8, 8] image whose features stay off the kink.
Td smooth_image_leaf(const FeatureExtractor<double>& fx, Rng& rng) {
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    Td t = leaf({1, 3, 8, 8}, rng, 0.0, 1.0);
    if (feature_margin(fx, t) >= kKinkMargin) return t;
  }
  no_smooth_draw("loss_rem_per");
}

template <typename Build>
GradCase make_case(std::string name, Build build) {
  return {std::move(name), [build](std::uint64_t seed) {
            Rng rng(seed);
            std::vector<Td> leaves;
            std::function<Td()> f = build(rng, leaves);
            return grad_check(f, leaves);
          }};
}

std::vector<Td> as_vector(std::initializer_list<Td> xs) { return std::vector<Td>(xs); }

CheckResult finish(std::string name, double value, double limit, std::string detail = {}) {
  CheckResult r;
  r.name = std::move(name);
  r.value = value;
  r.limit = limit;
  r.passed = std::isfinite(value) && value <= limit;
  r.detail = std::move(detail);
  return r;
}

double max_abs_diff(const Td& a, const Td& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

double dot(const Td& a, const Td& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a.at(i) * b.at(i);
  return s;
}

struct ConvCombo {
  int kernel, stride, pad;
};
// conv: detector/LSTM/tail (3,1,1), remover encoder and feature extractor
// (3,2,1), discriminator (4,2,1). deconv: remover decoder (4,2,1).
constexpr ConvCombo kConvCombos[] = {{3, 1, 1}, {3, 2, 1}, {4, 2, 1}, {1, 1, 0}, {5, 1, 2}};
constexpr ConvCombo kDeconvCombos[] = {{4, 2, 1}, {3, 1, 1}, {3, 2, 1}};

}  // namespace

Tensor<double> random_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  Td t = Td::zeros(shape);
  for (double& v : t.data_mut()) v = rng.uniform(lo, hi);
  return t;
}

double grad_check(const std::function<Tensor<double>()>& f, const std::vector<Tensor<double>>& leaves,
                  double eps) {
  for (const Td& x : leaves) {
    if (!x.requires_grad()) throw std::invalid_argument("grad_check: leaf does not require grad");
  }
  for (Td x : leaves) x.zero_grad();
  const Td y = f();
  if (y.numel() != 1) throw ShapeError("grad_check: function output " + shape_str(y.shape()) + " is not scalar");
  backward(y);

  double worst = 0.0;
  for (Td x : leaves) {
    std::vector<double> analytic(x.numel(), 0.0);
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
    auto data = x.data_mut();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      double plus, minus;
      {
        NoGradGuard guard;
        data[i] = saved + eps;
        plus = f().item();
        data[i] = saved - eps;
        minus = f().item();
      }
      data[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      const double err = std::abs(analytic[i] - numeric) / denom;
      if (!(err <= worst)) worst = std::isnan(err) ? INFINITY : std::max(worst, err);
    }
  }
  return worst;
}

double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f, const Tensor<double>& x,
                  double eps) {
  return grad_check([&] { return f(x); }, {x}, eps);
}

Tensor<double> naive_conv2d(const Tensor<double>& x, const ConvParams<double>& p) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int O = p.weight.dim(0), k = p.weight.dim(2), s = p.stride, pad = p.padding;
  const int Ho = (H + 2 * pad - k) / s + 1, Wo = (W + 2 * pad - k) / s + 1;
  Td out = Td::zeros({B, O, Ho, Wo});
  auto y = out.data_mut();
  for (int b = 0; b < B; ++b)
    for (int o = 0; o < O; ++o)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          double acc = p.bias.defined() ? p.bias.at(o) : 0.0;
          for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * s - pad + ky, ix = ox * s - pad + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += p.weight.at(((static_cast<std::size_t>(o) * C + c) * k + ky) * k + kx) *
                       x.at(((static_cast<std::size_t>(b) * C + c) * H + iy) * W + ix);
              }
          y[((static_cast<std::size_t>(b) * O + o) * Ho + oy) * Wo + ox] = acc;
        }
  return out;
}

Tensor<double> naive_deconv2d(const Tensor<double>& x, const ConvParams<double>& p) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int O = p.weight.dim(1), k = p.weight.dim(2), s = p.stride, pad = p.padding;
  const int Ho = (H - 1) * s - 2 * pad + k, Wo = (W - 1) * s - 2 * pad + k;
  Td out = Td::zeros({B, O, Ho, Wo});
  auto y = out.data_mut();
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int iy = 0; iy < H; ++iy)
        for (int ix = 0; ix < W; ++ix) {
          const double v = x.at(((static_cast<std::size_t>(b) * C + c) * H + iy) * W + ix);
          for (int o = 0; o < O; ++o)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int oy = iy * s - pad + ky, ox = ix * s - pad + kx;
                if (oy < 0 || oy >= Ho || ox < 0 || ox >= Wo) continue;
                y[((static_cast<std::size_t>(b) * O + o) * Ho + oy) * Wo + ox] +=
                    v * p.weight.at(((static_cast<std::size_t>(c) * O + o) * k + ky) * k + kx);
              }
        }
  if (p.bias.defined()) {
    const std::size_t plane = static_cast<std::size_t>(Ho) * Wo;
    for (int b = 0; b < B; ++b)
      for (int o = 0; o < O; ++o)
        for (std::size_t i = 0; i < plane; ++i) y[(static_cast<std::size_t>(b) * O + o) * plane + i] += p.bias.at(o);
  }
  return out;
}

double svd_sigma_max(const Tensor<double>& w) {
  const Eigen::Index rows = w.dim(0);
  const Eigen::Index cols = static_cast<Eigen::Index>(w.numel()) / rows;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = w.at(static_cast<std::size_t>(r * cols + c));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

std::vector<GradCase> gradient_cases() {
  std::vector<GradCase> cases;
  const Shape img = {2, 3, 4, 4};

  cases.push_back(make_case("add", [img](Rng& rng, std::vector<Td>& L) {
    Td a = leaf(img, rng), b = leaf(img, rng);
    L = as_vector({a, b});
    return [=]() { Rng r(kWeightSeed); return weighted_sum(add(a, b), r); };
  }));
  cases.push_back(make_case("sub_broadcast", [img](Rng& rng, std::vector<Td>& L) {
    Td a = leaf(img, rng), b = leaf({2, 1, 4, 4}, rng);
    L = as_vector({a, b});
    return [=]() { Rng r(kWeightSeed); return weighted_sum(sub(a, b), r); };
  }));
  cases.push_back(make_case("mul", [img](Rng& rng, std::vector<Td>& L) {
    Td a = leaf(img, rng), b = leaf(img, rng);
    L = as_vector({a, b});
    return [=]() { Rng r(kWeightSeed); return weighted_sum(mul(a, b), r); };
  }));
  cases.push_back(make_case("mul_broadcast", [img](Rng& rng, std::vector<Td>& L) {
    Td a = leaf(img, rng), b = leaf({2, 1, 4, 4}, rng);
    L = as_vector({a, b});
    return [=]() { Rng r(kWeightSeed); return weighted_sum(mul(a, b), r); };
  }));
  cases.push_back(make_case("affine", [img](Rng& rng, std::vector<Td>& L) {
    Td a = leaf(img, rng);
    const double s = rng.uniform(-2.0, 2.0), o = rng.uniform(-1.0, 1.0);
    L = as_vector({a});
    return [=]() { Rng r(kWeightSeed); return weighted_sum(affine(a, s, o), r); };
  }));
  cases.push_back(make_case("sigmoid", [img](Rng& rng, std::vector<Td>& L) {
    Td a = leaf(img, rng, -3.0, 3.0);
    L = as_vector({a});
    return [=]() { Rng r(kWeightSeed); return weighted_sum(sigmoid(a), r); };
  }));
  cases.push_back(make_case("tanh", [img](Rng& rng, std::vector<Td>& L) {
    Td a = leaf(img, rng, -3.0, 3.0);
    L = as_vector({a});
    return [=]() { Rng r(kWeightSeed); return weighted_sum(tanh(a), r); };
  }));
  cases.push_back(make_case("leaky_relu", [img](Rng& rng, std::vector<Td>& L) {
    Td a = leaf_off_zero(img, rng);
    L = as_vector({a});
    return [=]() { Rng r(kWeightSeed); return weighted_sum(leaky_relu(a, 0.2), r); };
  }));
  cases.push_back(make_case("log", [img](Rng& rng, std::vector<Td>& L) {
    Td a = leaf(img, rng, 0.1, 2.0);
    L = as_vector({a});
    return [=]() { Rng r(kWeightSeed); return weighted_sum(log(a), r); };
  }));
  cases.push_back(make_case("clamp", [img](Rng& rng, std::vector<Td>& L) {
    // Keep values off the bounds at +-0.5.
    Td a = Td::zeros(img);
    for (double& v : a.data_mut()) {
      const double m = rng.uniform() < 0.5 ? rng.uniform(0.0, 0.45) : rng.uniform(0.55, 1.0);
      v = rng.uniform() < 0.5 ? -m : m;
    }
    param(a);
    L = as_vector({a});
    return [=]() { Rng r(kWeightSeed); return weighted_sum(clamp(a, -0.5, 0.5), r); };
  }));
  cases.push_back(make_case("matmul", [](Rng& rng, std::vector<Td>& L) {
    Td a = leaf({3, 4}, rng), b = leaf({4, 5}, rng);
    L = as_vector({a, b});
    return [=]() { Rng r(kWeightSeed); return weighted_sum(matmul(a, b), r); };
  }));
  cases.push_back(make_case("sum", [img](Rng& rng, std::vector<Td>& L) {
    Td a = leaf(img, rng);
    L = as_vector({a});
    return [=]() { return sum(mul(a, a)); };
  }));
  cases.push_back(make_case("mean", [img](Rng& rng, std::vector<Td>& L) {
    Td a = leaf(img, rng);
    L = as_vector({a});
    return [=]() { return mean(mul(a, a)); };
  }));
  cases.push_back(make_case("mse", [img](Rng& rng, std::vector<Td>& L) {
    Td a = leaf(img, rng), b = leaf(img, rng);
    L = as_vector({a, b});
    return [=]() { return mse(a, b); };
  }));
  cases.push_back(make_case("reshape", [img](Rng& rng, std::vector<Td>& L) {
    Td a = leaf(img, rng);
    L = as_vector({a});
    return [=]() { Rng r(kWeightSeed); return weighted_sum(reshape(a, {6, 16}), r); };
  }));
  cases.push_back(make_case("concat_channels", [](Rng& rng, std::vector<Td>& L) {
    Td a = leaf({2, 2, 3, 3}, rng), b = leaf({2, 3, 3, 3}, rng);
    L = as_vector({a, b});
    return [=]() { Rng r(kWeightSeed); return weighted_sum(concat_channels<double>({a, b}), r); };
  }));
  cases.push_back(make_case("slice_channels", [img](Rng& rng, std::vector<Td>& L) {
    Td a = leaf(img, rng);
    L = as_vector({a});
    return [=]() { Rng r(kWeightSeed); return weighted_sum(slice_channels(a, 1, 2), r); };
  }));
  for (const ConvCombo& cc : kConvCombos) {
    char name[64];
    std::snprintf(name, sizeof name, "conv2d_k%d_s%d_p%d", cc.kernel, cc.stride, cc.pad);
    cases.push_back(make_case(name, [cc](Rng& rng, std::vector<Td>& L) {
      Td x = leaf({2, 3, 6, 6}, rng);
      ConvParams<double> p = conv_leaves(3, 4, cc.kernel, cc.stride, cc.pad, rng);
      L = as_vector({x, p.weight, p.bias});
      return [=]() { Rng r(kWeightSeed); return weighted_sum(conv2d(x, p), r); };
    }));
  }
  for (const ConvCombo& cc : kDeconvCombos) {
    char name[64];
    std::snprintf(name, sizeof name, "deconv2d_k%d_s%d_p%d", cc.kernel, cc.stride, cc.pad);
    cases.push_back(make_case(name, [cc](Rng& rng, std::vector<Td>& L) {
      Td x = leaf({2, 3, 3, 3}, rng);
      ConvParams<double> p = deconv_leaves(3, 2, cc.kernel, cc.stride, cc.pad, rng);
      L = as_vector({x, p.weight, p.bias});
      return [=]() { Rng r(kWeightSeed); return weighted_sum(deconv2d(x, p), r); };
    }));
  }
  cases.push_back(make_case("batchnorm_train", [img](Rng& rng, std::vector<Td>& L) {
    Td x = leaf(img, rng, -2.0, 2.0);
    auto bn = std::make_shared<BatchNormState<double>>(make_batchnorm<double>(3));
    bn->gamma = leaf({3}, rng, 0.5, 1.5);
    bn->beta = leaf({3}, rng);
    L = as_vector({x, bn->gamma, bn->beta});
    return [=]() { Rng r(kWeightSeed); return weighted_sum(batchnorm2d(x, *bn), r); };
  }));
  cases.push_back(make_case("batchnorm_eval", [img](Rng& rng, std::vector<Td>& L) {
    Td x = leaf(img, rng, -2.0, 2.0);
    auto bn = std::make_shared<BatchNormState<double>>(make_batchnorm<double>(3));
    bn->gamma = leaf({3}, rng, 0.5, 1.5);
    bn->beta = leaf({3}, rng);
    bn->running_mean = random_tensor({3}, rng);
    bn->running_var = random_tensor({3}, rng, 0.5, 2.0);
    bn->mode = Mode::eval;
    L = as_vector({x, bn->gamma, bn->beta});
    return [=]() { Rng r(kWeightSeed); return weighted_sum(batchnorm2d(x, *bn), r); };
  }));
  cases.push_back(make_case("batchnorm_leaky_relu", [img](Rng& rng, std::vector<Td>& L) {
    auto bn = std::make_shared<BatchNormState<double>>(make_batchnorm<double>(3));
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxRedraws) no_smooth_draw("batchnorm_leaky_relu");
      Td x = leaf(img, rng, -2.0, 2.0);
      bn->gamma = leaf({3}, rng, 0.5, 1.5);
      bn->beta = leaf({3}, rng);
      {
        NoGradGuard guard;
        if (min_abs(batchnorm2d(x, *bn)) < kKinkMargin) continue;
      }
      L = as_vector({x, bn->gamma, bn->beta});
      return std::function<Td()>([=]() { Rng r(kWeightSeed); return weighted_sum(batchnorm_leaky_relu(x, *bn, 0.2), r); });
    }
  }));
  cases.push_back(make_case("conv_bn_lrelu_mean", [img](Rng& rng, std::vector<Td>& L) {
    auto bn = std::make_shared<BatchNormState<double>>(make_batchnorm<double>(4));
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxRedraws) no_smooth_draw("conv_bn_lrelu_mean");
      Td x = leaf(img, rng);
      ConvParams<double> p = conv_leaves(3, 4, 3, 1, 1, rng);
      bn->gamma = leaf({4}, rng, 0.5, 1.5);
      bn->beta = leaf({4}, rng);
      {
        NoGradGuard guard;
        if (min_abs(batchnorm2d(conv2d(x, p), *bn)) < kKinkMargin) continue;
      }
      L = as_vector({x, p.weight, p.bias, bn->gamma, bn->beta});
      return std::function<Td()>([=]() { return mean(leaky_relu(batchnorm2d(conv2d(x, p), *bn), 0.2)); });
    }
  }));
  cases.push_back(make_case("conv_lstm_step", [](Rng& rng, std::vector<Td>& L) {
    const int hidden = 2;
    Td x = leaf({2, 3, 4, 4}, rng);
    ConvLstmParams<double> p;
    p.hidden = hidden;
    p.gates = conv_leaves(3 + hidden, 4 * hidden, 3, 1, 1, rng);
    ConvLstmState<double> s{leaf({2, hidden, 4, 4}, rng), leaf({2, hidden, 4, 4}, rng)};
    L = as_vector({x, p.gates.weight, p.gates.bias, s.h, s.c});
    return [=]() {
      Rng r(kWeightSeed);
      auto [h, next] = conv_lstm_step(x, s, p);
      return add(weighted_sum(h, r), weighted_sum(next.c, r));
    };
  }));
  cases.push_back(make_case("linear", [](Rng& rng, std::vector<Td>& L) {
    Td x = leaf({3, 5}, rng), w = leaf({4, 5}, rng), b = leaf({4}, rng);
    L = as_vector({x, w, b});
    return [=]() { Rng r(kWeightSeed); return weighted_sum(linear(x, w, b), r); };
  }));
  cases.push_back(make_case("spectral_conv", [](Rng& rng, std::vector<Td>& L) {
    Td x = leaf({2, 3, 4, 4}, rng);
    ConvParams<double> p = conv_leaves(3, 4, 4, 2, 1, rng);
    auto sn = std::make_shared<SpectralState<double>>(make_spectral<double>(4, 1, rng));
    spectral_normalize(p.weight, *sn);
    L = as_vector({x, p.weight, p.bias});
    return [=]() {
      Rng r(kWeightSeed);
      ConvParams<double> q = p;
      q.weight = apply_spectral(p.weight, *sn);
      return weighted_sum(conv2d(x, q), r);
    };
  }));
  cases.push_back(make_case("loss_det", [](Rng& rng, std::vector<Td>& L) {
    std::vector<Td> att;
    for (int i = 0; i < 3; ++i) att.push_back(leaf({2, 1, 4, 4}, rng, 0.0, 1.0));
    Td matte = random_tensor({2, 1, 4, 4}, rng, 0.0, 1.0);
    L = att;
    return [=]() { return loss_det(att, matte); };
  }));
  auto fx = std::make_shared<FeatureExtractor<double>>();
  cases.push_back(make_case("loss_rem_mse", [fx](Rng& rng, std::vector<Td>& L) {
    std::vector<Td> out;
    for (int i = 0; i < 3; ++i) out.push_back(leaf({1, 3, 8, 8}, rng, 0.0, 1.0));
    Td free = random_tensor({1, 3, 8, 8}, rng, 0.0, 1.0);
    L = out;
    return [=]() { return loss_rem(out, free, *fx).mse; };
  }));
  cases.push_back(make_case("loss_rem_per", [fx](Rng& rng, std::vector<Td>& L) {
    std::vector<Td> out;
    for (int i = 0; i < 2; ++i) out.push_back(smooth_image_leaf(*fx, rng));
    Td free = random_tensor({1, 3, 8, 8}, rng, 0.0, 1.0);
    L = out;
    return [=]() { return loss_rem(out, free, *fx).per; };
  }));
  for (bool semi : {false, true}) {
    for (bool d_side : {true, false}) {
      std::string name = std::string("loss_adv_") + (semi ? "semi_" : "sup_") + (d_side ? "d" : "g");
      cases.push_back(make_case(name, [semi, d_side](Rng& rng, std::vector<Td>& L) {
        Td real = leaf({4, 1}, rng, 0.05, 0.95), fake = leaf({4, 1}, rng, 0.05, 0.95);
        Td unsup = leaf({4, 1}, rng, 0.05, 0.95);
        const double lambda = rng.uniform(0.0, 1.0);
        L = semi ? as_vector({real, fake, unsup}) : as_vector({real, fake});
        return [=]() {
          const std::optional<Td> u = semi ? std::optional<Td>(unsup) : std::nullopt;
          const auto adv = loss_adv(real, fake, u, lambda);
          return d_side ? adv.d_loss : adv.g_loss;
        };
      }));
    }
  }
  cases.push_back(make_case("loss_total", [fx](Rng& rng, std::vector<Td>& L) {
    std::vector<Td> att, out;
    for (int i = 0; i < 2; ++i) {
      att.push_back(leaf({1, 1, 8, 8}, rng, 0.0, 1.0));
      out.push_back(smooth_image_leaf(*fx, rng));
    }
    Td matte = random_tensor({1, 1, 8, 8}, rng, 0.0, 1.0);
    Td free = random_tensor({1, 3, 8, 8}, rng, 0.0, 1.0);
    Td fake = leaf({1, 1}, rng, 0.05, 0.95);
    L = {att[0], att[1], out[0], out[1], fake};
    return [=]() {
      LossBreakdown<double> parts;
      parts.l_det = loss_det(att, matte);
      const auto rem = loss_rem(out, free, *fx);
      parts.l_rem_mse = rem.mse;
      parts.l_rem_per = rem.per;
      parts.l_adv_g = loss_adv<double>(Td::full({1, 1}, 0.5), fake, std::nullopt, 0.7).g_loss;
      return loss_total(parts);
    };
  }));
  return cases;
}

std::vector<CheckResult> gradient_suite(int seeds, double limit) {
  std::vector<CheckResult> out;
  for (const GradCase& c : gradient_cases()) {
    double worst = 0.0;
    std::uint64_t worst_seed = 0;
    for (int s = 1; s <= seeds; ++s) {
      const double e = c.run(static_cast<std::uint64_t>(s));
      if (!(e <= worst)) {
        worst = std::isnan(e) ? INFINITY : e;
        worst_seed = static_cast<std::uint64_t>(s);
      }
    }
    out.push_back(finish("grad " + c.name, worst, limit, "worst seed " + std::to_string(worst_seed)));
  }
  return out;
}

CheckResult conv_oracle_check() {
  double worst = 0.0;
  for (const ConvCombo& cc : kConvCombos) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      Rng rng(seed);
      const Td x = random_tensor({2, 3, 8, 8}, rng);
      ConvParams<double> p;
      p.weight = random_tensor({5, 3, cc.kernel, cc.kernel}, rng);
      p.bias = random_tensor({5}, rng);
      p.stride = cc.stride;
      p.padding = cc.pad;
      worst = std::max(worst, max_abs_diff(conv2d(x, p), naive_conv2d(x, p)));
    }
  }
  return finish("conv2d vs direct loops", worst, 1e-12);
}

CheckResult deconv_oracle_check() {
  double worst = 0.0;
  for (const ConvCombo& cc : kDeconvCombos) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      Rng rng(seed);
      const Td x = random_tensor({2, 4, 5, 5}, rng);
      ConvParams<double> p;
      p.weight = random_tensor({4, 3, cc.kernel, cc.kernel}, rng);
      p.bias = random_tensor({3}, rng);
      p.stride = cc.stride;
      p.padding = cc.pad;
      worst = std::max(worst, max_abs_diff(deconv2d(x, p), naive_deconv2d(x, p)));
    }
  }
  return finish("deconv2d vs direct loops", worst, 1e-12);
}

CheckResult deconv_adjoint_check() {
  // <conv(x), y> == <x, deconv(y)> with shared weights and no bias.
  double worst = 0.0;
  for (const ConvCombo& cc : kDeconvCombos) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Rng rng(seed);
      const int n = 8;
      ConvParams<double> p;
      p.weight = random_tensor({4, 3, cc.kernel, cc.kernel}, rng);
      p.stride = cc.stride;
      p.padding = cc.pad;
      const int m = conv_output_size(n, cc.kernel, cc.stride, cc.pad);
      if (deconv_output_size(m, cc.kernel, cc.stride, cc.pad) != n) continue;
      const Td x = random_tensor({2, 3, n, n}, rng);
      const Td y = random_tensor({2, 4, m, m}, rng);
      const double lhs = dot(conv2d(x, p), y);
      const double rhs = dot(x, deconv2d(y, p));
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-30));
    }
  }
  return finish("deconv2d adjoint identity", worst, 1e-10);
}

CheckResult spectral_svd_check() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Rng rng(seed);
    Td w = Td::zeros({64, 64});
    for (double& v : w.data_mut()) v = rng.normal();
    SpectralState<double> s = make_spectral<double>(64, 2000, rng);
    const double sigma = spectral_normalize(w, s).sigma;
    const double exact = svd_sigma_max(w);
    worst = std::max(worst, std::abs(sigma - exact) / exact);
  }
  return finish("spectral norm vs SVD", worst, 1e-6);
}

CheckResult lab_roundtrip_check() {
  double worst = 0.0;
  for (int g = 0; g < 256; ++g) {
    const double v = g / 255.0;
    const auto rgb = lab_to_rgb(rgb_to_lab(v, v, v));
    for (double c : rgb) worst = std::max(worst, std::abs(c - v));
  }
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const double r = rng.uniform(), g = rng.uniform(), b = rng.uniform();
    const auto rgb = lab_to_rgb(rgb_to_lab(r, g, b));
    worst = std::max({worst, std::abs(rgb[0] - r), std::abs(rgb[1] - g), std::abs(rgb[2] - b)});
  }
  return finish("LAB round trip", worst, 0.5 / 255.0);
}

std::vector<CheckResult> run_selfcheck(int seeds) {
  std::vector<CheckResult> out = gradient_suite(seeds);
  out.push_back(conv_oracle_check());
  out.push_back(deconv_oracle_check());
  out.push_back(deconv_adjoint_check());
  out.push_back(spectral_svd_check());
  out.push_back(lab_roundtrip_check());
  return out;
}

}  // namespace argan::check
