#include "argan/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "argan/ops.hpp"
#include "kernels.hpp"

namespace argan {

using detail::grad_buffer;
using detail::make_result;

int conv_output_size(int in, int kernel, int stride, int pad) {
  const int span = in + 2 * pad - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

int deconv_output_size(int in, int kernel, int stride, int pad) {
  return (in - 1) * stride - 2 * pad + kernel;
}

namespace {

template <typename T>
void check_conv_args(const Tensor<T>& x, const ConvParams<T>& p, int x_channels_axis_value,
                     const char* op) {
  if (x.ndim() != 4) throw ShapeError(std::string(op) + ": expected NCHW input, got " + shape_str(x.shape()));
  if (p.weight.ndim() != 4 || p.weight.dim(2) != p.weight.dim(3)) {
    throw ShapeError(std::string(op) + ": expected square [out x in x k x k] weight, got " +
                     shape_str(p.weight.shape()));
  }
  if (x.dim(1) != x_channels_axis_value) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(x.dim(1)) +
                     " channels, weight expects " + std::to_string(x_channels_axis_value));
  }
  if (p.stride < 1 || p.padding < 0) {
    throw ShapeError(std::string(op) + ": stride must be >= 1 and padding >= 0");
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvParams<T>& p) {
  check_conv_args(x, p, p.in_channels(), "conv2d");
  const int batch = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
  const int out_ch = p.out_channels(), k = p.kernel(), stride = p.stride, pad = p.padding;
  const int out_h = conv_output_size(height, k, stride, pad);
  const int out_w = conv_output_size(width, k, stride, pad);
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("conv2d: non-positive output size for input " + shape_str(x.shape()) +
                     " with kernel " + std::to_string(k) + " stride " + std::to_string(stride) +
                     " pad " + std::to_string(pad));
  }
  if (p.bias.defined() && (p.bias.numel() != static_cast<std::size_t>(out_ch))) {
    throw ShapeError("conv2d: bias " + shape_str(p.bias.shape()) + " does not match " +
                     std::to_string(out_ch) + " output channels");
  }
  Tensor<T> w = p.weight;
  Tensor<T> bt = p.bias;
  if (stride == 1 && 2 * pad == k - 1) {
    const kernels::SameConvShape s{batch, channels, out_ch, height, width, k};
    std::vector<T> out(static_cast<std::size_t>(batch) * out_ch * out_h * out_w);
    kernels::same_conv_forward(s, x.data().data(), w.data().data(), bt.defined() ? bt.data().data() : nullptr,
                               out.data());
    return make_result<T>(
        {batch, out_ch, out_h, out_w}, std::move(out), {x, w, bt},
        [=](const TensorImpl<T>& res) {
          kernels::same_conv_backward(s, x.data().data(), w.data().data(), res.grad.data(), grad_buffer(w),
                                      grad_buffer(x), grad_buffer(bt));
        },
        "conv2d");
  }

  const int plane = out_h * out_w;
  const int cols_n = batch * plane;
  const int rows_k = channels * k * k;
  const std::size_t in_plane = static_cast<std::size_t>(channels) * height * width;

  auto unfold = [=](const T* src, std::vector<T>& cols) {
    cols.resize(static_cast<std::size_t>(rows_k) * cols_n);
    for (int b = 0; b < batch; ++b) {
      kernels::im2col(src + b * in_plane, channels, height, width, k, stride, pad, out_h, out_w,
                      cols.data() + static_cast<std::size_t>(b) * plane, cols_n);
    }
  };

  std::vector<T> cols;
  unfold(x.data().data(), cols);
  std::vector<T> outm(static_cast<std::size_t>(out_ch) * cols_n);
  kernels::gemm<T>(false, false, out_ch, cols_n, rows_k, T(1), p.weight.data().data(), cols.data(),
                   T(0), outm.data());
  std::vector<T> out(static_cast<std::size_t>(batch) * out_ch * plane);
  const T* bias = p.bias.defined() ? p.bias.data().data() : nullptr;
  for (int b = 0; b < batch; ++b)
    for (int o = 0; o < out_ch; ++o) {
      const T* src = outm.data() + static_cast<std::size_t>(o) * cols_n + static_cast<std::size_t>(b) * plane;
      T* dst = out.data() + (static_cast<std::size_t>(b) * out_ch + o) * plane;
      const T bo = bias ? bias[o] : T(0);
      for (int i = 0; i < plane; ++i) dst[i] = src[i] + bo;
    }
  cols = {};

  return make_result<T>(
      {batch, out_ch, out_h, out_w}, std::move(out), {x, w, bt},
      [=](const TensorImpl<T>& res) {
        std::vector<T> gm(static_cast<std::size_t>(out_ch) * cols_n);
        for (int b = 0; b < batch; ++b)
          for (int o = 0; o < out_ch; ++o) {
            const T* src = res.grad.data() + (static_cast<std::size_t>(b) * out_ch + o) * plane;
            std::copy_n(src, plane, gm.data() + static_cast<std::size_t>(o) * cols_n +
                                        static_cast<std::size_t>(b) * plane);
          }
        if (T* gb = grad_buffer(bt)) {
          for (int o = 0; o < out_ch; ++o) {
            const T* row = gm.data() + static_cast<std::size_t>(o) * cols_n;
            T acc = T(0);
            for (int i = 0; i < cols_n; ++i) acc += row[i];
            gb[o] += acc;
          }
        }
        T* gw = grad_buffer(w);
        T* gx = grad_buffer(x);
        if (gw) {
          std::vector<T> cols;
          unfold(x.data().data(), cols);
          kernels::gemm<T>(false, true, out_ch, rows_k, cols_n, T(1), gm.data(), cols.data(), T(1), gw);
        }
        if (gx) {
          std::vector<T> dcols(static_cast<std::size_t>(rows_k) * cols_n);
          kernels::gemm<T>(true, false, rows_k, cols_n, out_ch, T(1), w.data().data(), gm.data(), T(0),
                           dcols.data());
          for (int b = 0; b < batch; ++b) {
            kernels::col2im(dcols.data() + static_cast<std::size_t>(b) * plane, cols_n, channels, height,
                            width, k, stride, pad, out_h, out_w, gx + b * in_plane);
          }
        }
      },
      "conv2d");
}

template <typename T>
Tensor<T> deconv2d(const Tensor<T>& x, const ConvParams<T>& p) {
  check_conv_args(x, p, p.out_channels(), "deconv2d");
  const int batch = x.dim(0), in_ch = x.dim(1), height = x.dim(2), width = x.dim(3);
  const int out_ch = p.in_channels(), k = p.kernel(), stride = p.stride, pad = p.padding;
  const int out_h = deconv_output_size(height, k, stride, pad);
  const int out_w = deconv_output_size(width, k, stride, pad);
  if (out_h < 1 || out_w < 1 || conv_output_size(out_h, k, stride, pad) != height ||
      conv_output_size(out_w, k, stride, pad) != width) {
    throw ShapeError("deconv2d: non-positive or inconsistent output size for input " +
                     shape_str(x.shape()) + " with kernel " + std::to_string(k) + " stride " +
                     std::to_string(stride) + " pad " + std::to_string(pad));
  }
  if (p.bias.defined() && p.bias.numel() != static_cast<std::size_t>(out_ch)) {
    throw ShapeError("deconv2d: bias " + shape_str(p.bias.shape()) + " does not match " +
                     std::to_string(out_ch) + " output channels");
  }
  const int plane = height * width;
  const int cols_n = batch * plane;
  const int rows_k = out_ch * k * k;
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;

  // Input gathered to [in_ch x B*H*W].
  std::vector<T> xm(static_cast<std::size_t>(in_ch) * cols_n);
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < in_ch; ++c) {
      std::copy_n(x.data().data() + (static_cast<std::size_t>(b) * in_ch + c) * plane, plane,
                  xm.data() + static_cast<std::size_t>(c) * cols_n + static_cast<std::size_t>(b) * plane);
    }
  std::vector<T> cols(static_cast<std::size_t>(rows_k) * cols_n);
  kernels::gemm<T>(true, false, rows_k, cols_n, in_ch, T(1), p.weight.data().data(), xm.data(), T(0),
                   cols.data());
  std::vector<T> out(static_cast<std::size_t>(batch) * out_ch * out_plane, T(0));
  for (int b = 0; b < batch; ++b) {
    kernels::col2im(cols.data() + static_cast<std::size_t>(b) * plane, cols_n, out_ch, out_h, out_w, k,
                    stride, pad, height, width, out.data() + b * out_ch * out_plane);
  }
  if (p.bias.defined()) {
    const T* bias = p.bias.data().data();
    for (int b = 0; b < batch; ++b)
      for (int o = 0; o < out_ch; ++o) {
        T* dst = out.data() + (static_cast<std::size_t>(b) * out_ch + o) * out_plane;
        for (std::size_t i = 0; i < out_plane; ++i) dst[i] += bias[o];
      }
  }
  cols = {};

  Tensor<T> w = p.weight;
  Tensor<T> bt = p.bias;
  return make_result<T>(
      {batch, out_ch, out_h, out_w}, std::move(out), {x, w, bt},
      [=, xm = std::move(xm)](const TensorImpl<T>& res) {
        const T* g = res.grad.data();
        if (T* gb = grad_buffer(bt)) {
          for (int o = 0; o < out_ch; ++o) {
            T acc = T(0);
            for (int b = 0; b < batch; ++b) {
              const T* src = g + (static_cast<std::size_t>(b) * out_ch + o) * out_plane;
              for (std::size_t i = 0; i < out_plane; ++i) acc += src[i];
            }
            gb[o] += acc;
          }
        }
        T* gw = grad_buffer(w);
        T* gx = grad_buffer(x);
        if (!gw && !gx) return;
        std::vector<T> dcols(static_cast<std::size_t>(rows_k) * cols_n);
        for (int b = 0; b < batch; ++b) {
          kernels::im2col(g + b * out_ch * out_plane, out_ch, out_h, out_w, k, stride, pad, height, width,
                          dcols.data() + static_cast<std::size_t>(b) * plane, cols_n);
        }
        if (gw) {
          kernels::gemm<T>(false, true, in_ch, rows_k, cols_n, T(1), xm.data(), dcols.data(), T(1), gw);
        }
        if (gx) {
          std::vector<T> dxm(static_cast<std::size_t>(in_ch) * cols_n);
          kernels::gemm<T>(false, false, in_ch, cols_n, rows_k, T(1), w.data().data(), dcols.data(), T(0),
                           dxm.data());
          for (int b = 0; b < batch; ++b)
            for (int c = 0; c < in_ch; ++c) {
              const T* src = dxm.data() + static_cast<std::size_t>(c) * cols_n + static_cast<std::size_t>(b) * plane;
              T* dst = gx + (static_cast<std::size_t>(b) * in_ch + c) * plane;
              for (int i = 0; i < plane; ++i) dst[i] += src[i];
            }
        }
      },
      "deconv2d");
}

template <typename T>
BatchNormState<T> make_batchnorm(int channels) {
  BatchNormState<T> s;
  s.gamma = param(Tensor<T>::ones({channels}));
  s.beta = param(Tensor<T>::zeros({channels}));
  s.running_mean = Tensor<T>::zeros({channels});
  s.running_var = Tensor<T>::ones({channels});
  return s;
}

namespace {

// Batch normalization, optionally followed by LeakyReLU with slope > 0 in
// the same pass. The activation's backward reads the sign of the output.
template <typename T>
Tensor<T> batchnorm_impl(const Tensor<T>& x, BatchNormState<T>& s, bool activate, double slope) {
  if (x.ndim() != 4 || x.dim(1) != static_cast<int>(s.gamma.numel())) {
    throw ShapeError("batchnorm2d: input " + shape_str(x.shape()) + " does not match " +
                     std::to_string(s.gamma.numel()) + " channels");
  }
  const int batch = x.dim(0), channels = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  const double count = static_cast<double>(batch) * static_cast<double>(plane);
  const T* px = x.data().data();
  const bool train = s.mode == Mode::train;
  const T k = static_cast<T>(slope);

  std::vector<T> mean(channels), invstd(channels);
  for (int c = 0; c < channels; ++c) {
    if (train) {
      double acc = 0.0;
      for (int b = 0; b < batch; ++b) {
        const T* src = px + (static_cast<std::size_t>(b) * channels + c) * plane;
        double part = 0.0;
        for (std::size_t i = 0; i < plane; ++i) part += src[i];
        acc += part;
      }
      const double mu = acc / count;
      double sq = 0.0;
      for (int b = 0; b < batch; ++b) {
        const T* src = px + (static_cast<std::size_t>(b) * channels + c) * plane;
        double part = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = static_cast<double>(src[i]) - mu;
          part += d * d;
        }
        sq += part;
      }
      const double var = sq / count;
      mean[c] = static_cast<T>(mu);
      invstd[c] = static_cast<T>(1.0 / std::sqrt(var + s.eps));
      auto rm = s.running_mean.data_mut();
      auto rv = s.running_var.data_mut();
      rm[c] = static_cast<T>(s.momentum * rm[c] + (1.0 - s.momentum) * mu);
      rv[c] = static_cast<T>(s.momentum * rv[c] + (1.0 - s.momentum) * var);
    } else {
      mean[c] = s.running_mean.data()[c];
      invstd[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(s.running_var.data()[c]) + s.eps));
    }
  }

  std::vector<T> out(x.numel());
  const T* gamma = s.gamma.data().data();
  const T* beta = s.beta.data().data();
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < channels; ++c) {
      const std::size_t base = (static_cast<std::size_t>(b) * channels + c) * plane;
      const T scale = gamma[c] * invstd[c];
      const T shift = beta[c] - mean[c] * scale;
      T* dst = out.data() + base;
      const T* src = px + base;
      if (activate) {
        for (std::size_t i = 0; i < plane; ++i) {
          const T v = src[i] * scale + shift;
          dst[i] = v > T(0) ? v : k * v;
        }
      } else {
        for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * scale + shift;
      }
    }

  Tensor<T> g_t = s.gamma;
  Tensor<T> b_t = s.beta;
  return make_result<T>(
      x.shape(), std::move(out), {x, g_t, b_t},
      [=](const TensorImpl<T>& res) {
        const T* gy = res.grad.data();
        const T* y = res.data.data();
        const T* px = x.data().data();
        const T* gamma = g_t.data().data();
        T* gx = grad_buffer(x);
        T* gg = grad_buffer(g_t);
        T* gb = grad_buffer(b_t);
        std::vector<T> pre(activate ? plane : 0);
        // Gradient at the normalized output, before the activation.
        auto pre_grad = [&](std::size_t base) -> const T* {
          if (!activate) return gy + base;
          for (std::size_t i = 0; i < plane; ++i) pre[i] = y[base + i] > T(0) ? gy[base + i] : k * gy[base + i];
          return pre.data();
        };
        for (int c = 0; c < channels; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (int b = 0; b < batch; ++b) {
            const std::size_t base = (static_cast<std::size_t>(b) * channels + c) * plane;
            const T* g = pre_grad(base);
            const T m = mean[c], is = invstd[c];
            double pg = 0.0, pgx = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
              const T xhat = (px[base + i] - m) * is;
              pg += g[i];
              pgx += static_cast<double>(g[i] * xhat);
            }
            sum_g += pg;
            sum_gx += pgx;
          }
          if (gg) gg[c] += static_cast<T>(sum_gx);
          if (gb) gb[c] += static_cast<T>(sum_g);
          if (!gx) continue;
          const T kc = gamma[c] * invstd[c];
          const T mean_g = train ? static_cast<T>(sum_g / count) : T(0);
          const T mean_gx = train ? static_cast<T>(sum_gx / count) : T(0);
          for (int b = 0; b < batch; ++b) {
            const std::size_t base = (static_cast<std::size_t>(b) * channels + c) * plane;
            const T* g = pre_grad(base);
            T* dst = gx + base;
            if (train) {
              const T m = mean[c], is = invstd[c];
              for (std::size_t i = 0; i < plane; ++i) {
                const T xhat = (px[base + i] - m) * is;
                dst[i] += kc * (g[i] - mean_g - xhat * mean_gx);
              }
            } else {
              for (std::size_t i = 0; i < plane; ++i) dst[i] += kc * g[i];
            }
          }
        }
      },
      activate ? "batchnorm_leaky_relu" : "batchnorm2d");
}

}  // namespace

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, BatchNormState<T>& s) {
  return batchnorm_impl(x, s, false, 0.0);
}

template <typename T>
Tensor<T> batchnorm_leaky_relu(const Tensor<T>& x, BatchNormState<T>& s, double slope) {
  if (!(slope > 0.0)) throw std::invalid_argument("batchnorm_leaky_relu: slope must be positive");
  return batchnorm_impl(x, s, true, slope);
}

namespace {

template <typename T>
T sigmoid_of(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

// Gate block `gate` of z for image b: pointer to `hidden` consecutive planes.
template <typename T>
const T* gate_block(const T* z, int b, int gate, int hidden, std::size_t plane) {
  return z + (static_cast<std::size_t>(b) * 4 * hidden + static_cast<std::size_t>(gate) * hidden) * plane;
}

// c = sigmoid(f) * c_prev + sigmoid(i) * tanh(g), gates laid out i, f, o, g.
template <typename T>
Tensor<T> lstm_cell_memory(const Tensor<T>& z, const Tensor<T>& c_prev, int hidden) {
  const int batch = c_prev.dim(0);
  const std::size_t plane = static_cast<std::size_t>(c_prev.dim(2)) * c_prev.dim(3);
  const std::size_t block = static_cast<std::size_t>(hidden) * plane;
  std::vector<T> out(c_prev.numel());
  const T* pz = z.data().data();
  const T* pc = c_prev.data().data();
  for (int b = 0; b < batch; ++b) {
    const T* zi = gate_block(pz, b, 0, hidden, plane);
    const T* zf = gate_block(pz, b, 1, hidden, plane);
    const T* zg = gate_block(pz, b, 3, hidden, plane);
    const T* cp = pc + b * block;
    T* dst = out.data() + b * block;
    for (std::size_t j = 0; j < block; ++j) dst[j] = sigmoid_of(zf[j]) * cp[j] + sigmoid_of(zi[j]) * std::tanh(zg[j]);
  }
  return make_result<T>(
      c_prev.shape(), std::move(out), {z, c_prev},
      [=](const TensorImpl<T>& res) {
        T* gz = grad_buffer(z);
        T* gc = grad_buffer(c_prev);
        const T* pz = z.data().data();
        const T* pc = c_prev.data().data();
        for (int b = 0; b < batch; ++b) {
          const T* zi = gate_block(pz, b, 0, hidden, plane);
          const T* zf = gate_block(pz, b, 1, hidden, plane);
          const T* zg = gate_block(pz, b, 3, hidden, plane);
          const T* cp = pc + b * block;
          const T* g = res.grad.data() + b * block;
          for (std::size_t j = 0; j < block; ++j) {
            const T si = sigmoid_of(zi[j]), sf = sigmoid_of(zf[j]), tg = std::tanh(zg[j]);
            if (gz) {
              T* base = gz + static_cast<std::size_t>(b) * 4 * block;
              base[j] += g[j] * tg * si * (T(1) - si);
              base[block + j] += g[j] * cp[j] * sf * (T(1) - sf);
              base[3 * block + j] += g[j] * si * (T(1) - tg * tg);
            }
            if (gc) gc[b * block + j] += g[j] * sf;
          }
        }
      },
      "lstm_cell_memory");
}

// h = sigmoid(o) * tanh(c)
template <typename T>
Tensor<T> lstm_cell_output(const Tensor<T>& z, const Tensor<T>& c, int hidden) {
  const int batch = c.dim(0);
  const std::size_t plane = static_cast<std::size_t>(c.dim(2)) * c.dim(3);
  const std::size_t block = static_cast<std::size_t>(hidden) * plane;
  std::vector<T> out(c.numel());
  const T* pz = z.data().data();
  const T* pc = c.data().data();
  for (int b = 0; b < batch; ++b) {
    const T* zo = gate_block(pz, b, 2, hidden, plane);
    const T* cc = pc + b * block;
    T* dst = out.data() + b * block;
    for (std::size_t j = 0; j < block; ++j) dst[j] = sigmoid_of(zo[j]) * std::tanh(cc[j]);
  }
  return make_result<T>(
      c.shape(), std::move(out), {z, c},
      [=](const TensorImpl<T>& res) {
        T* gz = grad_buffer(z);
        T* gc = grad_buffer(c);
        const T* pz = z.data().data();
        const T* pc = c.data().data();
        for (int b = 0; b < batch; ++b) {
          const T* zo = gate_block(pz, b, 2, hidden, plane);
          const T* cc = pc + b * block;
          const T* g = res.grad.data() + b * block;
          for (std::size_t j = 0; j < block; ++j) {
            const T so = sigmoid_of(zo[j]), tc = std::tanh(cc[j]);
            if (gz) gz[static_cast<std::size_t>(b) * 4 * block + 2 * block + j] += g[j] * tc * so * (T(1) - so);
            if (gc) gc[b * block + j] += g[j] * so * (T(1) - tc * tc);
          }
        }
      },
      "lstm_cell_output");
}

}  // namespace

template <typename T>
ConvLstmState<T> zero_lstm_state(int batch, int hidden, int height, int width) {
  return {Tensor<T>::zeros({batch, hidden, height, width}), Tensor<T>::zeros({batch, hidden, height, width})};
}

template <typename T>
std::pair<Tensor<T>, ConvLstmState<T>> conv_lstm_step(const Tensor<T>& x, const ConvLstmState<T>& state,
                                                      const ConvLstmParams<T>& params) {
  const int hidden = params.hidden;
  if (x.ndim() != 4 || state.h.ndim() != 4 || x.dim(0) != state.h.dim(0) || x.dim(2) != state.h.dim(2) ||
      x.dim(3) != state.h.dim(3) || state.h.shape() != state.c.shape() || state.h.dim(1) != hidden) {
    throw ShapeError("conv_lstm_step: input " + shape_str(x.shape()) + " does not match state h " +
                     shape_str(state.h.shape()) + " / c " + shape_str(state.c.shape()));
  }
  const Tensor<T> z = conv2d(concat_channels<T>({x, state.h}), params.gates);
  Tensor<T> c = lstm_cell_memory(z, state.c, hidden);
  Tensor<T> h = lstm_cell_output(z, c, hidden);
  return {h, ConvLstmState<T>{h, c}};
}

namespace {

// ||v||, guarded.
double normalize_into(std::vector<double>& v) {
  double n = 0.0;
  for (double e : v) n += e * e;
  n = std::sqrt(n);
  if (n < 1e-12) return n;
  for (double& e : v) e /= n;
  return n;
}

}  // namespace

template <typename T>
SpectralResult<T> spectral_normalize(const Tensor<T>& weight, SpectralState<T>& s) {
  const int rows = weight.dim(0);
  const std::size_t cols = weight.numel() / static_cast<std::size_t>(rows);
  if (s.u.numel() != static_cast<std::size_t>(rows)) {
    throw ShapeError("spectral_normalize: u has " + std::to_string(s.u.numel()) + " entries, weight has " +
                     std::to_string(rows) + " rows");
  }
  const T* w = weight.data().data();
  std::vector<double> u(s.u.data().begin(), s.u.data().end());
  std::vector<double> v(cols, 0.0);
  std::vector<double> wv(rows, 0.0);

  auto mul_t = [&](const std::vector<double>& a, std::vector<double>& outv) {  // W^T a
    std::fill(outv.begin(), outv.end(), 0.0);
    for (int r = 0; r < rows; ++r) {
      const T* row = w + static_cast<std::size_t>(r) * cols;
      for (std::size_t c = 0; c < cols; ++c) outv[c] += static_cast<double>(row[c]) * a[r];
    }
  };
  auto mul = [&](const std::vector<double>& a, std::vector<double>& outv) {  // W a
    for (int r = 0; r < rows; ++r) {
      const T* row = w + static_cast<std::size_t>(r) * cols;
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += static_cast<double>(row[c]) * a[c];
      outv[r] = acc;
    }
  };

  const int iters = std::max(1, s.n_power_iters);
  for (int it = 0; it < iters; ++it) {
    mul_t(u, v);
    normalize_into(v);
    mul(v, wv);
    std::vector<double> next = wv;
    if (normalize_into(next) >= 1e-12) u = std::move(next);
  }
  mul(v, wv);
  double sigma = 0.0;
  for (int r = 0; r < rows; ++r) sigma += u[r] * wv[r];

  auto ud = s.u.data_mut();
  for (int r = 0; r < rows; ++r) ud[r] = static_cast<T>(u[r]);
  if (!s.sigma.defined()) s.sigma = Tensor<T>::scalar(T(1));
  s.sigma.data_mut()[0] = static_cast<T>(sigma);
  return {apply_spectral(weight, s), sigma};
}

template <typename T>
Tensor<T> apply_spectral(const Tensor<T>& weight, const SpectralState<T>& s) {
  const double sigma = std::max(static_cast<double>(s.sigma.item()), 1e-12);
  return scale(weight, 1.0 / sigma);
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (x.ndim() != 2 || weight.ndim() != 2 || x.dim(1) != weight.dim(1) ||
      (bias.defined() && bias.numel() != static_cast<std::size_t>(weight.dim(0)))) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + ", weight " + shape_str(weight.shape()) +
                     (bias.defined() ? ", bias " + shape_str(bias.shape()) : std::string()) +
                     " do not agree");
  }
  const int batch = x.dim(0), n = x.dim(1), m = weight.dim(0);
  std::vector<T> out(static_cast<std::size_t>(batch) * m);
  kernels::gemm<T>(false, true, batch, m, n, T(1), x.data().data(), weight.data().data(), T(0), out.data());
  if (bias.defined()) {
    for (int b = 0; b < batch; ++b)
      for (int j = 0; j < m; ++j) out[static_cast<std::size_t>(b) * m + j] += bias.data()[j];
  }
  return make_result<T>(
      {batch, m}, std::move(out), {x, weight, bias},
      [=](const TensorImpl<T>& res) {
        const T* g = res.grad.data();
        if (T* gx = grad_buffer(x)) {
          kernels::gemm<T>(false, false, batch, n, m, T(1), g, weight.data().data(), T(1), gx);
        }
        if (T* gw = grad_buffer(weight)) {
          kernels::gemm<T>(true, false, m, n, batch, T(1), g, x.data().data(), T(1), gw);
        }
        if (T* gb = grad_buffer(bias)) {
          for (int b = 0; b < batch; ++b)
            for (int j = 0; j < m; ++j) gb[j] += g[static_cast<std::size_t>(b) * m + j];
        }
      },
      "linear");
}

template <typename T>
Tensor<T> he_normal(const Shape& shape, int fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<T> values(numel(shape));
  for (T& v : values) v = static_cast<T>(stddev * rng.normal());
  return Tensor<T>::from(shape, std::move(values));
}

template <typename T>
ConvParams<T> make_conv(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng) {
  ConvParams<T> p;
  p.weight = param(he_normal<T>({out_ch, in_ch, kernel, kernel}, in_ch * kernel * kernel, rng));
  p.bias = param(Tensor<T>::zeros({out_ch}));
  p.stride = stride;
  p.padding = pad;
  return p;
}

template <typename T>
ConvParams<T> make_deconv(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng) {
  ConvParams<T> p;
  p.weight = param(he_normal<T>({in_ch, out_ch, kernel, kernel}, in_ch * kernel * kernel, rng));
  p.bias = param(Tensor<T>::zeros({out_ch}));
  p.stride = stride;
  p.padding = pad;
  return p;
}

template <typename T>
ConvLstmParams<T> make_conv_lstm(int in_ch, int hidden, Rng& rng) {
  ConvLstmParams<T> p;
  p.hidden = hidden;
  p.gates = make_conv<T>(in_ch + hidden, 4 * hidden, 3, 1, 1, rng);
  auto bias = p.gates.bias.data_mut();
  for (int i = hidden; i < 2 * hidden; ++i) bias[i] = T(1);
  return p;
}

template <typename T>
SpectralState<T> make_spectral(int out_ch, int n_power_iters, Rng& rng) {
  std::vector<double> u(out_ch);
  for (double& e : u) e = rng.normal();
  normalize_into(u);
  SpectralState<T> s;
  s.u = Tensor<T>::from({out_ch}, std::vector<T>(u.begin(), u.end()));
  s.sigma = Tensor<T>::scalar(T(1));
  s.n_power_iters = n_power_iters;
  return s;
}

#define ARGAN_INSTANTIATE_LAYERS(T)                                                                  \
  template Tensor<T> conv2d(const Tensor<T>&, const ConvParams<T>&);                                 \
  template Tensor<T> deconv2d(const Tensor<T>&, const ConvParams<T>&);                               \
  template BatchNormState<T> make_batchnorm(int);                                                    \
  template Tensor<T> batchnorm2d(const Tensor<T>&, BatchNormState<T>&);                              \
  template Tensor<T> batchnorm_leaky_relu(const Tensor<T>&, BatchNormState<T>&, double);            \
  template ConvLstmState<T> zero_lstm_state(int, int, int, int);                                     \
  template std::pair<Tensor<T>, ConvLstmState<T>> conv_lstm_step(const Tensor<T>&,                   \
                                                                 const ConvLstmState<T>&,            \
                                                                 const ConvLstmParams<T>&);          \
  template SpectralResult<T> spectral_normalize(const Tensor<T>&, SpectralState<T>&);                \
  template Tensor<T> apply_spectral(const Tensor<T>&, const SpectralState<T>&);                      \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> he_normal(const Shape&, int, Rng&);                                             \
  template ConvParams<T> make_conv(int, int, int, int, int, Rng&);                                   \
  template ConvParams<T> make_deconv(int, int, int, int, int, Rng&);                                 \
  template ConvLstmParams<T> make_conv_lstm(int, int, Rng&);                                         \
  template SpectralState<T> make_spectral(int, int, Rng&);

ARGAN_INSTANTIATE_LAYERS(float)
ARGAN_INSTANTIATE_LAYERS(double)

}  // namespace argan
