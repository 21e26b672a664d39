#pragma once

// Dense kernels shared by the autograd ops. Private to the library.

namespace argan::kernels {

// Row-major C[MxN] = alpha * op(A) * op(B) + beta * C, op(A) is MxK.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, const T* b, T beta,
          T* c);

// Unfolds one CxHxW image into a (C*k*k) x (out_h*out_w) column block whose
// rows are `col_stride` apart.
template <typename T>
void im2col(const T* src, int channels, int height, int width, int kernel, int stride, int pad,
            int out_h, int out_w, T* cols, int col_stride);

// Adjoint of im2col: scatters (accumulates) columns back into the image.
template <typename T>
void col2im(const T* cols, int col_stride, int channels, int height, int width, int kernel,
            int stride, int pad, int out_h, int out_w, T* dst);

// Stride-1 convolution with padding (k-1)/2 (output size equals input size)
// computed as k*k accumulated GEMMs over shifted views of a zero-padded copy
// of the batch, which avoids materializing im2col columns.
struct SameConvShape {
  int batch, in_ch, out_ch, height, width, kernel;
};

// out: NCHW [batch x out_ch x height x width]; bias may be null.
template <typename T>
void same_conv_forward(const SameConvShape& s, const T* x, const T* weight, const T* bias, T* out);

// Accumulates into gw / gx / gb; any of them may be null.
template <typename T>
void same_conv_backward(const SameConvShape& s, const T* x, const T* weight, const T* gout, T* gw, T* gx,
                        T* gb);

}  // namespace argan::kernels
