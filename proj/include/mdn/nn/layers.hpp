#pragma once

// Single-sample layer kernels over planar tensors. Parameters live in one flat
// array; each layer records offsets into it. Backward passes accumulate into
// parameter gradients and (when given) into the input gradient, so callers
// zero those buffers once and let every consumer of a tensor add its share.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mdn/nn/tensor.hpp"

#if defined(__SSE2__) || defined(_M_X64)
#include <xmmintrin.h>
#define MDN_HAVE_MXCSR 1
#endif

namespace mdn::nn {

// Flushes subnormal floats to zero on this thread for the guard's lifetime.
// Trained weights produce many tiny activations whose subnormal arithmetic
// would otherwise slow kernels several-fold.
class FlushDenormals {
 public:
#ifdef MDN_HAVE_MXCSR
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~FlushDenormals() { _mm_setcsr(saved_); }
#else
  FlushDenormals() = default;
#endif
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

#ifdef MDN_HAVE_MXCSR
 private:
  unsigned saved_;
#endif
};

// k x k convolution, stride 1, zero "same" padding (k in {1, 3}).
struct Conv {
  int cin = 0, cout = 0, k = 3;
  std::size_t w = 0, b = 0;
  bool bias = true;

  Eigen::Index patch() const noexcept { return Eigen::Index(cin) * k * k; }
  std::size_t weight_count() const noexcept { return std::size_t(cout) * patch(); }
};

// 2x2 transposed convolution with stride 2. Weight layout [cout][2][2][cin].
struct UpConv {
  int cin = 0, cout = 0;
  std::size_t w = 0, b = 0;

  std::size_t weight_count() const noexcept { return std::size_t(cout) * 4 * cin; }
};

// Column strips cover about this many output pixels so the im2col buffer
// stays cache-resident.
inline constexpr int kStripPixels = 4096;

inline int strip_rows(int h, int w) { return std::max(1, std::min(h, kStripPixels / w)); }

// Columns for output rows [y0, y0 + rows): row (ci * 9 + ky * 3 + kx), one column per pixel.
template <typename T>
void im2col3x3(const Tensor<T>& x, int y0, int rows, Buffer<T>& col) {
  const int H = x.h, W = x.w;
  const std::size_t n = std::size_t(rows) * W;
  col.resize(std::size_t(x.c) * 9 * n);
  for (int ci = 0; ci < x.c; ++ci) {
    const T* src = x.channel(ci);
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = col.data() + (std::size_t(ci) * 9 + ky * 3 + kx) * n;
        const int dy = ky - 1, dx = kx - 1;
        for (int r = 0; r < rows; ++r) {
          T* d = dst + std::size_t(r) * W;
          const int sy = y0 + r + dy;
          if (sy < 0 || sy >= H) {
            std::fill_n(d, W, T(0));
            continue;
          }
          const T* s = src + std::size_t(sy) * W;
          if (dx == 0) {
            std::copy_n(s, W, d);
          } else if (dx < 0) {
            d[0] = T(0);
            std::copy_n(s, W - 1, d + 1);
          } else {
            std::copy_n(s + 1, W - 1, d);
            d[W - 1] = T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im3x3_add(const Buffer<T>& col, int y0, int rows, Tensor<T>& dx) {
  const int H = dx.h, W = dx.w;
  const std::size_t n = std::size_t(rows) * W;
  for (int ci = 0; ci < dx.c; ++ci) {
    T* dst = dx.channel(ci);
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = col.data() + (std::size_t(ci) * 9 + ky * 3 + kx) * n;
        const int dy = ky - 1, dxo = kx - 1;
        for (int r = 0; r < rows; ++r) {
          const int sy = y0 + r + dy;
          if (sy < 0 || sy >= H) continue;
          const T* s = src + std::size_t(r) * W;
          T* d = dst + std::size_t(sy) * W;
          if (dxo == 0) {
            for (int x = 0; x < W; ++x) d[x] += s[x];
          } else if (dxo < 0) {
            for (int x = 1; x < W; ++x) d[x - 1] += s[x];
          } else {
            for (int x = 0; x + 1 < W; ++x) d[x + 1] += s[x];
          }
        }
      }
    }
  }
}

template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
void conv_forward(const Conv& L, const T* params, const Tensor<T>& x, Tensor<T>& y,
                  Buffer<T>& col) {
  y.reshape(L.cout, x.h, x.w);
  ConstMatMap<T> W(params + L.w, L.cout, L.patch());
  if (L.k == 1) {
    y.mat().noalias() = W * x.mat();
  } else {
    const int rows = strip_rows(x.h, x.w);
    const Eigen::Index hw = Eigen::Index(x.plane());
    for (int y0 = 0; y0 < x.h; y0 += rows) {
      const int r = std::min(rows, x.h - y0);
      const Eigen::Index n = Eigen::Index(r) * x.w;
      im2col3x3(x, y0, r, col);
      ConstMatMap<T> C(col.data(), L.patch(), n);
      StridedMap<T> Y(y.data.data() + std::size_t(y0) * x.w, L.cout, n, Eigen::OuterStride<>(hw));
      Y.noalias() = W * C;
    }
  }
  if (L.bias) {
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(params + L.b, L.cout);
    y.mat().colwise() += b;
  }
}

template <typename T>
void conv_backward(const Conv& L, const T* params, T* grads, const Tensor<T>& x,
                   const Tensor<T>& dy, Tensor<T>* dx, Buffer<T>& col,
                   Buffer<T>& dcol) {
  ConstMatMap<T> W(params + L.w, L.cout, L.patch());
  MatMap<T> dW(grads + L.w, L.cout, L.patch());
  if (L.bias) {
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(grads + L.b, L.cout);
    db += dy.mat().rowwise().sum();
  }
  if (L.k == 1) {
    dW.noalias() += dy.mat() * x.mat().transpose();
    if (dx) dx->mat().noalias() += W.transpose() * dy.mat();
    return;
  }
  const int rows = strip_rows(x.h, x.w);
  const Eigen::Index hw = Eigen::Index(x.plane());
  for (int y0 = 0; y0 < x.h; y0 += rows) {
    const int r = std::min(rows, x.h - y0);
    const Eigen::Index n = Eigen::Index(r) * x.w;
    im2col3x3(x, y0, r, col);
    ConstMatMap<T> C(col.data(), L.patch(), n);
    ConstStridedMap<T> G(dy.data.data() + std::size_t(y0) * x.w, L.cout, n,
                         Eigen::OuterStride<>(hw));
    dW.noalias() += G * C.transpose();
    if (dx) {
      dcol.resize(col.size());
      MatMap<T> dC(dcol.data(), L.patch(), n);
      dC.noalias() = W.transpose() * G;
      col2im3x3_add(dcol, y0, r, *dx);
    }
  }
}

template <typename T>
void upconv_forward(const UpConv& L, const T* params, const Tensor<T>& x, Tensor<T>& y,
                    Buffer<T>& scratch) {
  const Eigen::Index hw = Eigen::Index(x.plane());
  scratch.resize(std::size_t(L.cout) * 4 * std::size_t(hw));
  MatMap<T> Z(scratch.data(), Eigen::Index(L.cout) * 4, hw);
  ConstMatMap<T> W(params + L.w, Eigen::Index(L.cout) * 4, L.cin);
  Z.noalias() = W * x.mat();
  y.reshape(L.cout, 2 * x.h, 2 * x.w);
  for (int co = 0; co < L.cout; ++co) {
    const T bias = params[L.b + std::size_t(co)];
    T* out = y.channel(co);
    for (int di = 0; di < 2; ++di)
      for (int dj = 0; dj < 2; ++dj) {
        const T* z = scratch.data() + (std::size_t(co) * 4 + di * 2 + dj) * std::size_t(hw);
        for (int i = 0; i < x.h; ++i) {
          T* row = out + std::size_t(2 * i + di) * y.w + dj;
          const T* zr = z + std::size_t(i) * x.w;
          for (int j = 0; j < x.w; ++j) row[2 * j] = zr[j] + bias;
        }
      }
  }
}

template <typename T>
void upconv_backward(const UpConv& L, const T* params, T* grads, const Tensor<T>& x,
                     const Tensor<T>& dy, Tensor<T>* dx, Buffer<T>& scratch) {
  const Eigen::Index hw = Eigen::Index(x.plane());
  scratch.resize(std::size_t(L.cout) * 4 * std::size_t(hw));
  for (int co = 0; co < L.cout; ++co) {
    const T* g = dy.channel(co);
    T bias_grad = 0;
    for (std::size_t i = 0; i < dy.plane(); ++i) bias_grad += g[i];
    grads[L.b + std::size_t(co)] += bias_grad;
    for (int di = 0; di < 2; ++di)
      for (int dj = 0; dj < 2; ++dj) {
        T* z = scratch.data() + (std::size_t(co) * 4 + di * 2 + dj) * std::size_t(hw);
        for (int i = 0; i < x.h; ++i) {
          const T* row = g + std::size_t(2 * i + di) * dy.w + dj;
          T* zr = z + std::size_t(i) * x.w;
          for (int j = 0; j < x.w; ++j) zr[j] = row[2 * j];
        }
      }
  }
  ConstMatMap<T> dZ(scratch.data(), Eigen::Index(L.cout) * 4, hw);
  MatMap<T> dW(grads + L.w, Eigen::Index(L.cout) * 4, L.cin);
  dW.noalias() += dZ * x.mat().transpose();
  if (dx) {
    ConstMatMap<T> W(params + L.w, Eigen::Index(L.cout) * 4, L.cin);
    dx->mat().noalias() += W.transpose() * dZ;
  }
}

// 2x2 max pooling, stride 2. `arg` records the winning offset (dy * 2 + dx).
template <typename T>
void maxpool_forward(const Tensor<T>& x, Tensor<T>& y, std::vector<std::uint8_t>& arg) {
  y.reshape(x.c, x.h / 2, x.w / 2);
  arg.resize(y.size());
  std::size_t k = 0;
  for (int c = 0; c < x.c; ++c) {
    const T* in = x.channel(c);
    T* out = y.channel(c);
    for (int i = 0; i < y.h; ++i)
      for (int j = 0; j < y.w; ++j, ++k) {
        const T* p = in + std::size_t(2 * i) * x.w + 2 * j;
        T best = p[0];
        std::uint8_t which = 0;
        if (p[1] > best) best = p[1], which = 1;
        if (p[x.w] > best) best = p[x.w], which = 2;
        if (p[x.w + 1] > best) best = p[x.w + 1], which = 3;
        out[std::size_t(i) * y.w + j] = best;
        arg[k] = which;
      }
  }
}

template <typename T>
void maxpool_backward_add(const Tensor<T>& dy, const std::vector<std::uint8_t>& arg,
                          Tensor<T>& dx) {
  std::size_t k = 0;
  for (int c = 0; c < dy.c; ++c) {
    const T* g = dy.channel(c);
    T* out = dx.channel(c);
    for (int i = 0; i < dy.h; ++i)
      for (int j = 0; j < dy.w; ++j, ++k) {
        const int a = arg[k];
        out[std::size_t(2 * i + a / 2) * dx.w + 2 * j + a % 2] += g[std::size_t(i) * dy.w + j];
      }
  }
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
  for (auto& v : x.data) v = v > T(0) ? v : T(0);
}

// dy *= (y > 0), where y is the ReLU output.
template <typename T>
void relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy) {
  for (std::size_t i = 0; i < dy.data.size(); ++i)
    if (!(y.data[i] > T(0))) dy.data[i] = T(0);
}

template <typename T>
T sigmoid(T z) {
  return T(1) / (T(1) + std::exp(-z));
}

// log(1 + exp(z)) without overflow.
template <typename T>
T softplus(T z) {
  return std::max(z, T(0)) + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace mdn::nn
