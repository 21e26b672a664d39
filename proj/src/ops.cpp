#include "argan/ops.hpp"

#include <atomic>
#include <cmath>

#include "argan/debug.hpp"
#include "kernels.hpp"

namespace argan {

namespace debug {
namespace {
std::atomic<bool> g_sigmoid_fault{false};
}
void inject_sigmoid_backward_fault(bool on) { g_sigmoid_fault = on; }
bool sigmoid_backward_fault() { return g_sigmoid_fault; }
}  // namespace debug

using detail::grad_buffer;
using detail::make_result;

namespace {

struct BroadcastLayout {
  std::size_t outer = 1;     // batch
  std::size_t channels = 1;  // channels of a
  std::size_t inner = 1;     // spatial
  bool broadcast = false;
};

template <typename T>
BroadcastLayout broadcast_layout(const Tensor<T>& a, const Tensor<T>& b) {
  BroadcastLayout layout;
  if (a.shape() == b.shape()) {
    layout.inner = a.numel();
    return layout;
  }
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  bool ok = sa.size() == sb.size() && sa.size() >= 2 && sb[1] == 1;
  for (std::size_t i = 0; ok && i < sa.size(); ++i) {
    if (i != 1 && sa[i] != sb[i]) ok = false;
  }
  if (!ok) {
    throw ShapeError("elementwise: shapes " + shape_str(sa) + " and " + shape_str(sb) +
                     " are neither equal nor channel-broadcastable");
  }
  layout.outer = static_cast<std::size_t>(sa[0]);
  layout.channels = static_cast<std::size_t>(sa[1]);
  layout.inner = a.numel() / (layout.outer * layout.channels);
  layout.broadcast = true;
  return layout;
}

}  // namespace

template <typename T>
Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, Binary kind) {
  const BroadcastLayout L = broadcast_layout(a, b);
  const std::size_t n = a.numel();
  std::vector<T> out(n);
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  // Flat index of b for element (o, c, i) of a.
  auto b_index = [L](std::size_t o, std::size_t i) { return o * L.inner + i; };

  auto apply = [&](auto op) {
    if (!L.broadcast) {
      for (std::size_t i = 0; i < n; ++i) out[i] = op(pa[i], pb[i]);
      return;
    }
    for (std::size_t o = 0; o < L.outer; ++o)
      for (std::size_t c = 0; c < L.channels; ++c) {
        const std::size_t base = (o * L.channels + c) * L.inner;
        for (std::size_t i = 0; i < L.inner; ++i) out[base + i] = op(pa[base + i], pb[b_index(o, i)]);
      }
  };
  switch (kind) {
    case Binary::add: apply([](T x, T y) { return x + y; }); break;
    case Binary::sub: apply([](T x, T y) { return x - y; }); break;
    case Binary::mul: apply([](T x, T y) { return x * y; }); break;
  }

  auto backward_fn = [a, b, kind, L, b_index](const TensorImpl<T>& res) {
    const T* g = res.grad.data();
    T* ga = grad_buffer(a);
    T* gb = grad_buffer(b);
    const T* va = a.data().data();
    const T* vb = b.data().data();
    for (std::size_t o = 0; o < L.outer; ++o)
      for (std::size_t c = 0; c < L.channels; ++c) {
        const std::size_t base = (o * L.channels + c) * L.inner;
        for (std::size_t i = 0; i < L.inner; ++i) {
          const std::size_t ia = base + i;
          const std::size_t ib = L.broadcast ? b_index(o, i) : ia;
          switch (kind) {
            case Binary::add:
              if (ga) ga[ia] += g[ia];
              if (gb) gb[ib] += g[ia];
              break;
            case Binary::sub:
              if (ga) ga[ia] += g[ia];
              if (gb) gb[ib] -= g[ia];
              break;
            case Binary::mul:
              if (ga) ga[ia] += g[ia] * vb[ib];
              if (gb) gb[ib] += g[ia] * va[ia];
              break;
          }
        }
      }
  };
  static constexpr const char* names[] = {"add", "sub", "mul"};
  return make_result<T>(a.shape(), std::move(out), {a, b}, backward_fn,
                        names[static_cast<int>(kind)]);
}

template <typename T>
Tensor<T> affine(const Tensor<T>& x, double scale, double offset) {
  const T s = static_cast<T>(scale);
  const T o = static_cast<T>(offset);
  std::vector<T> out(x.numel());
  const T* px = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] * s + o;
  return make_result<T>(
      x.shape(), std::move(out), {x},
      [x, s](const TensorImpl<T>& res) {
        T* gx = grad_buffer(x);
        if (!gx) return;
        for (std::size_t i = 0; i < res.grad.size(); ++i) gx[i] += res.grad[i] * s;
      },
      "affine");
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind, double slope) {
  const std::size_t n = x.numel();
  std::vector<T> out(n);
  const T* px = x.data().data();
  const T k = static_cast<T>(slope);
  switch (kind) {
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) out[i] = T(1) / (T(1) + std::exp(-px[i]));
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(px[i]);
      break;
    case Activation::leaky_relu:
      for (std::size_t i = 0; i < n; ++i) out[i] = px[i] > T(0) ? px[i] : k * px[i];
      break;
  }
  static constexpr const char* names[] = {"sigmoid", "tanh", "leaky_relu"};
  return make_result<T>(
      x.shape(), std::move(out), {x},
      [x, kind, k](const TensorImpl<T>& res) {
        T* gx = grad_buffer(x);
        if (!gx) return;
        const T* g = res.grad.data();
        const T* y = res.data.data();
        const std::size_t n = res.data.size();
        switch (kind) {
          case Activation::sigmoid: {
            const T fault = debug::sigmoid_backward_fault() ? T(1.1) : T(1);
            for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]) * fault;
            break;
          }
          case Activation::tanh:
            for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * (T(1) - y[i] * y[i]);
            break;
          case Activation::leaky_relu: {
            const T* px = x.data().data();
            for (std::size_t i = 0; i < n; ++i) gx[i] += px[i] > T(0) ? g[i] : k * g[i];
            break;
          }
        }
      },
      names[static_cast<int>(kind)]);
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  const T* px = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(px[i]);
  return make_result<T>(
      x.shape(), std::move(out), {x},
      [x](const TensorImpl<T>& res) {
        T* gx = grad_buffer(x);
        if (!gx) return;
        const T* px = x.data().data();
        for (std::size_t i = 0; i < res.grad.size(); ++i) gx[i] += res.grad[i] / px[i];
      },
      "log");
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, double lo, double hi) {
  const T l = static_cast<T>(lo);
  const T h = static_cast<T>(hi);
  std::vector<T> out(x.numel());
  const T* px = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(px[i], l), h);
  return make_result<T>(
      x.shape(), std::move(out), {x},
      [x, l, h](const TensorImpl<T>& res) {
        T* gx = grad_buffer(x);
        if (!gx) return;
        const T* px = x.data().data();
        for (std::size_t i = 0; i < res.grad.size(); ++i) {
          if (px[i] >= l && px[i] <= h) gx[i] += res.grad[i];
        }
      },
      "clamp");
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(static_cast<std::size_t>(m) * n);
  kernels::gemm<T>(false, false, m, n, k, T(1), a.data().data(), b.data().data(), T(0), out.data());
  return make_result<T>(
      {m, n}, std::move(out), {a, b},
      [a, b, m, n, k](const TensorImpl<T>& res) {
        const T* g = res.grad.data();
        if (T* ga = grad_buffer(a)) {
          kernels::gemm<T>(false, true, m, k, n, T(1), g, b.data().data(), T(1), ga);
        }
        if (T* gb = grad_buffer(b)) {
          kernels::gemm<T>(true, false, k, n, m, T(1), a.data().data(), g, T(1), gb);
        }
      },
      "matmul");
}

template <typename T>
Tensor<T> reduce(const Tensor<T>& x, Reduction kind) {
  double acc = 0.0;
  for (T v : x.data()) acc += static_cast<double>(v);
  const double n = static_cast<double>(x.numel());
  if (kind == Reduction::mean) acc /= n;
  return make_result<T>(
      {}, {static_cast<T>(acc)}, {x},
      [x, kind, n](const TensorImpl<T>& res) {
        T* gx = grad_buffer(x);
        if (!gx) return;
        const T g = kind == Reduction::mean ? static_cast<T>(res.grad[0] / n) : res.grad[0];
        for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += g;
      },
      kind == Reduction::mean ? "mean" : "sum");
}

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
    acc += d * d;
  }
  const double n = static_cast<double>(a.numel());
  return make_result<T>(
      {}, {static_cast<T>(acc / n)}, {a, b},
      [a, b, n](const TensorImpl<T>& res) {
        T* ga = grad_buffer(a);
        T* gb = grad_buffer(b);
        const T* pa = a.data().data();
        const T* pb = b.data().data();
        const T g = static_cast<T>(2.0 * res.grad[0] / n);
        for (std::size_t i = 0; i < a.numel(); ++i) {
          const T d = g * (pa[i] - pb[i]);
          if (ga) ga[i] += d;
          if (gb) gb[i] -= d;
        }
      },
      "mse");
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>(
      shape, std::move(out), {x},
      [x](const TensorImpl<T>& res) {
        T* gx = grad_buffer(x);
        if (!gx) return;
        for (std::size_t i = 0; i < res.grad.size(); ++i) gx[i] += res.grad[i];
      },
      "reshape");
}

namespace {
template <typename T>
void check_channel_layout(const Tensor<T>& ref, const Tensor<T>& t, const char* op) {
  const auto& a = ref.shape();
  const auto& b = t.shape();
  bool ok = a.size() == b.size() && a.size() >= 2;
  for (std::size_t i = 0; ok && i < a.size(); ++i) {
    if (i != 1 && a[i] != b[i]) ok = false;
  }
  if (!ok) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                     " differ outside the channel axis");
  }
}
}  // namespace

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  int channels = 0;
  for (const auto& p : parts) {
    check_channel_layout(parts.front(), p, "concat_channels");
    channels += p.dim(1);
  }
  Shape shape = parts.front().shape();
  shape[1] = channels;
  const std::size_t batch = static_cast<std::size_t>(shape[0]);
  const std::size_t inner = parts.front().numel() / (batch * parts.front().dim(1));
  std::vector<T> out(numel(shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t block = p.dim(1) * inner;
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(p.data().data() + b * block, block, out.data() + b * channels * inner + offset);
    }
    offset += block;
  }
  return make_result<T>(
      shape, std::move(out), parts,
      [parts, batch, inner, channels](const TensorImpl<T>& res) {
        std::size_t offset = 0;
        for (const auto& p : parts) {
          const std::size_t block = p.dim(1) * inner;
          if (T* gp = grad_buffer(p)) {
            for (std::size_t b = 0; b < batch; ++b) {
              const T* src = res.grad.data() + b * channels * inner + offset;
              T* dst = gp + b * block;
              for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
            }
          }
          offset += block;
        }
      },
      "concat_channels");
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int start, int count) {
  if (x.ndim() < 2 || start < 0 || count <= 0 || start + count > x.dim(1)) {
    throw ShapeError("slice_channels: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of range for " + shape_str(x.shape()));
  }
  Shape shape = x.shape();
  shape[1] = count;
  const std::size_t batch = static_cast<std::size_t>(shape[0]);
  const std::size_t channels = static_cast<std::size_t>(x.dim(1));
  const std::size_t inner = x.numel() / (batch * channels);
  const std::size_t block = static_cast<std::size_t>(count) * inner;
  std::vector<T> out(batch * block);
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy_n(x.data().data() + (b * channels + start) * inner, block, out.data() + b * block);
  }
  return make_result<T>(
      shape, std::move(out), {x},
      [x, batch, channels, inner, block, start](const TensorImpl<T>& res) {
        T* gx = grad_buffer(x);
        if (!gx) return;
        for (std::size_t b = 0; b < batch; ++b) {
          T* dst = gx + (b * channels + start) * inner;
          const T* src = res.grad.data() + b * block;
          for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
        }
      },
      "slice_channels");
}

#define ARGAN_INSTANTIATE_OPS(T)                                                  \
  template Tensor<T> elementwise(const Tensor<T>&, const Tensor<T>&, Binary);     \
  template Tensor<T> affine(const Tensor<T>&, double, double);                    \
  template Tensor<T> activation(const Tensor<T>&, Activation, double);            \
  template Tensor<T> log(const Tensor<T>&);                                       \
  template Tensor<T> clamp(const Tensor<T>&, double, double);                     \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> reduce(const Tensor<T>&, Reduction);                         \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> reshape(const Tensor<T>&, const Shape&);                     \
  template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);              \
  template Tensor<T> slice_channels(const Tensor<T>&, int, int);

ARGAN_INSTANTIATE_OPS(float)
ARGAN_INSTANTIATE_OPS(double)

}  // namespace argan
