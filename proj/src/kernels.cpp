#include "kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <vector>

#include "argan/threads.hpp"

namespace argan {

namespace {
int threads_from_env() {
  const char* env = std::getenv("ARGAN_THREADS");
  if (env == nullptr) return 1;
  const int n = std::atoi(env);
  return n >= 1 ? n : 1;
}

int& thread_setting() {
  static int threads = [] {
    const int n = threads_from_env();
    Eigen::setNbThreads(n);
    return n;
  }();
  return threads;
}
}  // namespace

int kernel_threads() { return thread_setting(); }

void set_kernel_threads(int n) {
  thread_setting() = std::max(1, n);
  Eigen::setNbThreads(thread_setting());
}

namespace kernels {

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, const T* b, T beta,
          T* c) {
  (void)thread_setting();
  using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMap = Eigen::Map<const RowMat>;
  Eigen::Map<RowMat> cm(c, m, n);
  if (beta == T(0)) {
    cm.setZero();
  } else if (beta != T(1)) {
    cm *= beta;
  }
  if (m == 0 || n == 0 || k == 0) return;
  const ConstMap am(a, trans_a ? k : m, trans_a ? m : k);
  const ConstMap bm(b, trans_b ? n : k, trans_b ? k : n);
  if (!trans_a && !trans_b) {
    cm.noalias() += alpha * am * bm;
  } else if (trans_a && !trans_b) {
    cm.noalias() += alpha * am.transpose() * bm;
  } else if (!trans_a && trans_b) {
    cm.noalias() += alpha * am * bm.transpose();
  } else {
    cm.noalias() += alpha * am.transpose() * bm.transpose();
  }
}

template <typename T>
void im2col(const T* src, int channels, int height, int width, int kernel, int stride, int pad,
            int out_h, int out_w, T* cols, int col_stride) {
  for (int c = 0; c < channels; ++c) {
    const T* plane = src + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        T* row = cols + static_cast<std::size_t>((c * kernel + ky) * kernel + kx) * col_stride;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* out = row + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(out, out + out_w, T(0));
            continue;
          }
          const T* in = plane + static_cast<std::size_t>(iy) * width;
          if (stride == 1) {
            const int lo = std::clamp(pad - kx, 0, out_w);
            const int hi = std::clamp(width + pad - kx, lo, out_w);
            std::fill(out, out + lo, T(0));
            if (hi > lo) std::memcpy(out + lo, in + lo - pad + kx, sizeof(T) * (hi - lo));
            std::fill(out + hi, out + out_w, T(0));
          } else {
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride - pad + kx;
              out[ox] = (ix >= 0 && ix < width) ? in[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, int col_stride, int channels, int height, int width, int kernel,
            int stride, int pad, int out_h, int out_w, T* dst) {
  for (int c = 0; c < channels; ++c) {
    T* plane = dst + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const T* row = cols + static_cast<std::size_t>((c * kernel + ky) * kernel + kx) * col_stride;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= height) continue;
          T* out = plane + static_cast<std::size_t>(iy) * width;
          const T* in = row + static_cast<std::size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < width) out[ix] += in[ox];
          }
        }
      }
    }
  }
}


namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

// Per-thread scratch reused across calls; large fresh allocations are slow.
template <typename T>
struct Scratch {
  std::vector<T> padded, product, weights, dpadded;
};

template <typename T>
Scratch<T>& scratch() {
  thread_local Scratch<T> s;
  return s;
}

template <typename T>
T* sized(std::vector<T>& v, std::size_t n) {
  if (v.size() < n) v.resize(n);
  return v.data();
}

// Columns of the padded batch: b * plane + y * wp + x. Each channel row is
// `ld` long so that every shifted view of n columns stays inside the row.
struct SameLayout {
  int pad, hp, wp;
  std::size_t plane, n, ld;
};

SameLayout same_layout(const SameConvShape& s) {
  SameLayout L;
  L.pad = (s.kernel - 1) / 2;
  L.hp = s.height + 2 * L.pad;
  L.wp = s.width + 2 * L.pad;
  L.plane = static_cast<std::size_t>(L.hp) * L.wp;
  L.n = static_cast<std::size_t>(s.batch) * L.plane;
  L.ld = L.n + static_cast<std::size_t>(s.kernel - 1) * L.wp + (s.kernel - 1);
  return L;
}

template <typename T>
void pad_batch(const SameConvShape& s, const SameLayout& L, const T* x, T* xp) {
  std::fill(xp, xp + static_cast<std::size_t>(s.in_ch) * L.ld, T(0));
  for (int c = 0; c < s.in_ch; ++c)
    for (int b = 0; b < s.batch; ++b)
      for (int y = 0; y < s.height; ++y) {
        const T* src = x + ((static_cast<std::size_t>(b) * s.in_ch + c) * s.height + y) * s.width;
        T* dst = xp + c * L.ld + b * L.plane + static_cast<std::size_t>(y + L.pad) * L.wp + L.pad;
        std::memcpy(dst, src, sizeof(T) * s.width);
      }
}

// [k*k x out_ch x in_ch] copy of an [out_ch x in_ch x k x k] weight.
template <typename T>
void gather_taps(const SameConvShape& s, const T* weight, T* taps) {
  const int kk = s.kernel * s.kernel;
  for (int o = 0; o < s.out_ch; ++o)
    for (int c = 0; c < s.in_ch; ++c)
      for (int t = 0; t < kk; ++t)
        taps[(static_cast<std::size_t>(t) * s.out_ch + o) * s.in_ch + c] =
            weight[(static_cast<std::size_t>(o) * s.in_ch + c) * kk + t];
}

}  // namespace

template <typename T>
void same_conv_forward(const SameConvShape& s, const T* x, const T* weight, const T* bias, T* out) {
  (void)thread_setting();
  const SameLayout L = same_layout(s);
  Scratch<T>& ws = scratch<T>();
  T* xp = sized(ws.padded, static_cast<std::size_t>(s.in_ch) * L.ld);
  T* prod = sized(ws.product, static_cast<std::size_t>(s.out_ch) * L.n);
  T* taps = sized(ws.weights, static_cast<std::size_t>(s.kernel) * s.kernel * s.out_ch * s.in_ch);
  pad_batch(s, L, x, xp);
  gather_taps(s, weight, taps);
  Eigen::Map<RowMat<T>> pm(prod, s.out_ch, static_cast<Eigen::Index>(L.n));
  for (int ky = 0; ky < s.kernel; ++ky)
    for (int kx = 0; kx < s.kernel; ++kx) {
      const int t = ky * s.kernel + kx;
      const ConstStridedMap<T> xs(xp + static_cast<std::size_t>(ky) * L.wp + kx, s.in_ch,
                                  static_cast<Eigen::Index>(L.n), Eigen::OuterStride<>(L.ld));
      const Eigen::Map<const RowMat<T>> wt(taps + static_cast<std::size_t>(t) * s.out_ch * s.in_ch, s.out_ch,
                                           s.in_ch);
      if (t == 0) {
        pm.noalias() = wt * xs;
      } else {
        pm.noalias() += wt * xs;
      }
    }
  for (int b = 0; b < s.batch; ++b)
    for (int o = 0; o < s.out_ch; ++o) {
      const T bo = bias ? bias[o] : T(0);
      for (int y = 0; y < s.height; ++y) {
        const T* src = prod + o * L.n + b * L.plane + static_cast<std::size_t>(y) * L.wp;
        T* dst = out + ((static_cast<std::size_t>(b) * s.out_ch + o) * s.height + y) * s.width;
        for (int xx = 0; xx < s.width; ++xx) dst[xx] = src[xx] + bo;
      }
    }
}

template <typename T>
void same_conv_backward(const SameConvShape& s, const T* x, const T* weight, const T* gout, T* gw, T* gx,
                        T* gb) {
  (void)thread_setting();
  const SameLayout L = same_layout(s);
  const std::size_t out_plane = static_cast<std::size_t>(s.height) * s.width;
  if (gb) {
    for (int o = 0; o < s.out_ch; ++o) {
      T acc = T(0);
      for (int b = 0; b < s.batch; ++b) {
        const T* src = gout + (static_cast<std::size_t>(b) * s.out_ch + o) * out_plane;
        for (std::size_t i = 0; i < out_plane; ++i) acc += src[i];
      }
      gb[o] += acc;
    }
  }
  if (!gw && !gx) return;
  Scratch<T>& ws = scratch<T>();
  T* dprod = sized(ws.product, static_cast<std::size_t>(s.out_ch) * L.n);
  std::fill(dprod, dprod + static_cast<std::size_t>(s.out_ch) * L.n, T(0));
  for (int b = 0; b < s.batch; ++b)
    for (int o = 0; o < s.out_ch; ++o)
      for (int y = 0; y < s.height; ++y) {
        const T* src = gout + ((static_cast<std::size_t>(b) * s.out_ch + o) * s.height + y) * s.width;
        std::memcpy(dprod + o * L.n + b * L.plane + static_cast<std::size_t>(y) * L.wp, src, sizeof(T) * s.width);
      }
  const Eigen::Map<const RowMat<T>> dm(dprod, s.out_ch, static_cast<Eigen::Index>(L.n));
  const int kk = s.kernel * s.kernel;
  T* taps = sized(ws.weights, static_cast<std::size_t>(kk) * s.out_ch * s.in_ch);

  if (gw) {
    T* xp = sized(ws.padded, static_cast<std::size_t>(s.in_ch) * L.ld);
    pad_batch(s, L, x, xp);
    for (int t = 0; t < kk; ++t) {
      const int ky = t / s.kernel, kx = t % s.kernel;
      const ConstStridedMap<T> xs(xp + static_cast<std::size_t>(ky) * L.wp + kx, s.in_ch,
                                  static_cast<Eigen::Index>(L.n), Eigen::OuterStride<>(L.ld));
      Eigen::Map<RowMat<T>> dt(taps + static_cast<std::size_t>(t) * s.out_ch * s.in_ch, s.out_ch, s.in_ch);
      dt.noalias() = dm * xs.transpose();
    }
    for (int o = 0; o < s.out_ch; ++o)
      for (int c = 0; c < s.in_ch; ++c)
        for (int t = 0; t < kk; ++t)
          gw[(static_cast<std::size_t>(o) * s.in_ch + c) * kk + t] +=
              taps[(static_cast<std::size_t>(t) * s.out_ch + o) * s.in_ch + c];
  }
  if (gx) {
    gather_taps(s, weight, taps);
    T* dxp = sized(ws.dpadded, static_cast<std::size_t>(s.in_ch) * L.ld);
    std::fill(dxp, dxp + static_cast<std::size_t>(s.in_ch) * L.ld, T(0));
    for (int t = 0; t < kk; ++t) {
      const int ky = t / s.kernel, kx = t % s.kernel;
      StridedMap<T> dxs(dxp + static_cast<std::size_t>(ky) * L.wp + kx, s.in_ch, static_cast<Eigen::Index>(L.n),
                        Eigen::OuterStride<>(L.ld));
      const Eigen::Map<const RowMat<T>> wt(taps + static_cast<std::size_t>(t) * s.out_ch * s.in_ch, s.out_ch,
                                           s.in_ch);
      dxs.noalias() += wt.transpose() * dm;
    }
    for (int c = 0; c < s.in_ch; ++c)
      for (int b = 0; b < s.batch; ++b)
        for (int y = 0; y < s.height; ++y) {
          const T* src = dxp + c * L.ld + b * L.plane + static_cast<std::size_t>(y + L.pad) * L.wp + L.pad;
          T* dst = gx + ((static_cast<std::size_t>(b) * s.in_ch + c) * s.height + y) * s.width;
          for (int xx = 0; xx < s.width; ++xx) dst[xx] += src[xx];
        }
  }
}

template void same_conv_forward(const SameConvShape&, const float*, const float*, const float*, float*);
template void same_conv_forward(const SameConvShape&, const double*, const double*, const double*, double*);
template void same_conv_backward(const SameConvShape&, const float*, const float*, const float*, float*, float*,
                                 float*);
template void same_conv_backward(const SameConvShape&, const double*, const double*, const double*, double*,
                                 double*, double*);

template void gemm(bool, bool, int, int, int, float, const float*, const float*, float, float*);
template void gemm(bool, bool, int, int, int, double, const double*, const double*, double,
                   double*);
template void im2col(const float*, int, int, int, int, int, int, int, int, float*, int);
template void im2col(const double*, int, int, int, int, int, int, int, int, double*, int);
template void col2im(const float*, int, int, int, int, int, int, int, int, int, float*);
template void col2im(const double*, int, int, int, int, int, int, int, int, int, double*);

}  // namespace kernels
}  // namespace argan
