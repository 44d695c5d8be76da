#pragma once

// Raw forward/backward kernels on plain tensors. The differentiable wrappers
// in ops.hpp bind these into the tape. Every kernel writes each output element
// from exactly one thread with a fixed reduction order, so results do not
// depend on the thread count.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#ifndef EIGEN_DONT_PARALLELIZE
#define EIGEN_DONT_PARALLELIZE
#endif
#include <Eigen/Core>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "effipose/tensor.hpp"

namespace effipose {

inline void set_num_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

inline int num_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

enum class Padding { same, valid };

/// Output geometry of a strided KxK window over an HxW plane.
/// Same padding puts the odd extra pixel on the bottom/right.
struct ConvGeometry {
  int in_h = 0, in_w = 0;
  int out_h = 0, out_w = 0;
  int kernel = 1, stride = 1;
  int pad_top = 0, pad_left = 0;
};

inline ConvGeometry conv_geometry(int in_h, int in_w, int kernel, int stride,
                                  Padding padding) {
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (kernel < 1) throw ConfigError("kernel must be >= 1");
  if (in_h <= 0 || in_w <= 0) throw DimensionError("non-positive spatial dims");
  ConvGeometry g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.kernel = kernel;
  g.stride = stride;
  if (padding == Padding::same) {
    g.out_h = (in_h + stride - 1) / stride;
    g.out_w = (in_w + stride - 1) / stride;
    const int pad_h = std::max((g.out_h - 1) * stride + kernel - in_h, 0);
    const int pad_w = std::max((g.out_w - 1) * stride + kernel - in_w, 0);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
  } else {
    if (in_h < kernel || in_w < kernel)
      throw DimensionError("valid convolution: kernel " + std::to_string(kernel) +
                           " larger than input " + std::to_string(in_h) + "x" +
                           std::to_string(in_w));
    g.out_h = (in_h - kernel) / stride + 1;
    g.out_w = (in_w - kernel) / stride + 1;
  }
  return g;
}

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// cols[(c*k + ky)*k + kx][oy*ow + ox] = plane[c][oy*s - pt + ky][ox*s - pl + kx]
template <class T>
void im2col(const T* src, int channels, const ConvGeometry& g, T* cols) {
  const int k = g.kernel, s = g.stride;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  for (int c = 0; c < channels; ++c) {
    const T* plane = src + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * out_plane;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * s - g.pad_top + ky;
          T* dst = row + static_cast<std::size_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* line = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * s - g.pad_left + kx;
            dst[ox] = (ix >= 0 && ix < g.in_w) ? line[ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates columns back into the plane.
template <class T>
void col2im(const T* cols, int channels, const ConvGeometry& g, T* dst) {
  const int k = g.kernel, s = g.stride;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  for (int c = 0; c < channels; ++c) {
    T* plane = dst + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * out_plane;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * s - g.pad_top + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          T* line = plane + static_cast<std::size_t>(iy) * g.in_w;
          const T* srow = row + static_cast<std::size_t>(oy) * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * s - g.pad_left + kx;
            if (ix >= 0 && ix < g.in_w) line[ix] += srow[ox];
          }
        }
      }
    }
  }
}

inline bool is_pointwise(const ConvGeometry& g) {
  return g.kernel == 1 && g.stride == 1 && g.pad_top == 0 && g.pad_left == 0;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dense convolution. weight: [out, in, k, k]; bias: [out] or empty.

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const T* bias,
                         const ConvGeometry& g) {
  const Shape xs = x.shape(), ws = w.shape();
  const int cin = xs.c, cout = ws.n;
  const int kk = cin * g.kernel * g.kernel;
  Tensor<T> y(Shape{xs.n, cout, g.out_h, g.out_w});
  const std::size_t op = static_cast<std::size_t>(g.out_h) * g.out_w;
  detail::CMapMat<T> W(w.data(), cout, kk);
  const bool pw = detail::is_pointwise(g);
#pragma omp parallel
  {
    std::vector<T> cols(pw ? 0 : static_cast<std::size_t>(kk) * op);
#pragma omp for schedule(static)
    for (int n = 0; n < xs.n; ++n) {
      const T* src = x.plane(n, 0);
      if (!pw) {
        detail::im2col(src, cin, g, cols.data());
        src = cols.data();
      }
      detail::CMapMat<T> C(src, kk, op);
      detail::MapMat<T> Y(y.plane(n, 0), cout, op);
      Y.noalias() = W * C;
      if (bias)
        for (int o = 0; o < cout; ++o) Y.row(o).array() += bias[o];
    }
  }
  return y;
}

/// Accumulates gradients of conv2d into dx / dw / db (any may be null).
template <class T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                     const ConvGeometry& g, T* dx, T* dw, T* db) {
  const Shape xs = x.shape(), ws = w.shape();
  const int cin = xs.c, cout = ws.n, nb = xs.n;
  const int kk = cin * g.kernel * g.kernel;
  const std::size_t op = static_cast<std::size_t>(g.out_h) * g.out_w;
  const std::size_t ip = xs.plane();
  detail::CMapMat<T> W(w.data(), cout, kk);
  const bool pw = detail::is_pointwise(g);
  std::vector<T> dw_part(dw ? static_cast<std::size_t>(nb) * cout * kk : 0);
#pragma omp parallel
  {
    std::vector<T> cols(pw ? 0 : static_cast<std::size_t>(kk) * op);
    std::vector<T> dcols(pw ? 0 : static_cast<std::size_t>(kk) * op);
#pragma omp for schedule(static)
    for (int n = 0; n < nb; ++n) {
      detail::CMapMat<T> DY(dy.plane(n, 0), cout, op);
      if (dw) {
        const T* src = x.plane(n, 0);
        if (!pw) {
          detail::im2col(src, cin, g, cols.data());
          src = cols.data();
        }
        detail::CMapMat<T> C(src, kk, op);
        detail::MapMat<T> DW(dw_part.data() + static_cast<std::size_t>(n) * cout * kk, cout, kk);
        DW.noalias() = DY * C.transpose();
      }
      if (dx) {
        T* dxn = dx + static_cast<std::size_t>(n) * cin * ip;
        if (pw) {
          detail::MapMat<T> DX(dxn, cin, op);
          DX.noalias() += W.transpose() * DY;
        } else {
          detail::MapMat<T> DC(dcols.data(), kk, op);
          DC.noalias() = W.transpose() * DY;
          detail::col2im(dcols.data(), cin, g, dxn);
        }
      }
    }
  }
  if (dw) {
    const std::size_t len = static_cast<std::size_t>(cout) * kk;
    for (int n = 0; n < nb; ++n) {
      const T* part = dw_part.data() + static_cast<std::size_t>(n) * len;
      for (std::size_t i = 0; i < len; ++i) dw[i] += part[i];
    }
  }
  if (db) {
    for (int o = 0; o < cout; ++o) {
      T acc = 0;
      for (int n = 0; n < nb; ++n) {
        const T* p = dy.plane(n, o);
        for (std::size_t i = 0; i < op; ++i) acc += p[i];
      }
      db[o] += acc;
    }
  }
}

// ---------------------------------------------------------------------------
// Depthwise convolution. weight: [C, 1, k, k].

namespace detail {

template <class T>
void pad_plane(const T* src, int h, int w, const ConvGeometry& g, int ph, int pw, T* dst) {
  std::fill(dst, dst + static_cast<std::size_t>(ph) * pw, T(0));
  for (int y = 0; y < h; ++y)
    std::memcpy(dst + static_cast<std::size_t>(y + g.pad_top) * pw + g.pad_left,
                src + static_cast<std::size_t>(y) * w, sizeof(T) * w);
}

inline int padded_extent(int out, int stride, int kernel, int in, int pad_before) {
  return std::max((out - 1) * stride + kernel, in + pad_before);
}

}  // namespace detail

template <class T>
Tensor<T> depthwise_forward(const Tensor<T>& x, const Tensor<T>& w, const ConvGeometry& g) {
  const Shape xs = x.shape();
  const int k = g.kernel, s = g.stride;
  const int ph = detail::padded_extent(g.out_h, s, k, xs.h, g.pad_top);
  const int pw = detail::padded_extent(g.out_w, s, k, xs.w, g.pad_left);
  Tensor<T> y(Shape{xs.n, xs.c, g.out_h, g.out_w});
  const int total = xs.n * xs.c;
#pragma omp parallel
  {
    std::vector<T> pad(static_cast<std::size_t>(ph) * pw);
#pragma omp for schedule(static)
    for (int nc = 0; nc < total; ++nc) {
      const int n = nc / xs.c, c = nc % xs.c;
      detail::pad_plane(x.plane(n, c), xs.h, xs.w, g, ph, pw, pad.data());
      T* out = y.plane(n, c);
      const T* wk = w.data() + static_cast<std::size_t>(c) * k * k;
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const T wv = wk[ky * k + kx];
          for (int oy = 0; oy < g.out_h; ++oy) {
            const T* line = pad.data() + static_cast<std::size_t>(oy * s + ky) * pw + kx;
            T* o = out + static_cast<std::size_t>(oy) * g.out_w;
            if (s == 1) {
              for (int ox = 0; ox < g.out_w; ++ox) o[ox] += wv * line[ox];
            } else {
              for (int ox = 0; ox < g.out_w; ++ox) o[ox] += wv * line[ox * s];
            }
          }
        }
    }
  }
  return y;
}

template <class T>
void depthwise_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                        const ConvGeometry& g, T* dx, T* dw) {
  const Shape xs = x.shape();
  const int k = g.kernel, s = g.stride;
  const int ph = detail::padded_extent(g.out_h, s, k, xs.h, g.pad_top);
  const int pw = detail::padded_extent(g.out_w, s, k, xs.w, g.pad_left);
  const int total = xs.n * xs.c;
  const std::size_t kk = static_cast<std::size_t>(k) * k;
  std::vector<T> dw_part(dw ? static_cast<std::size_t>(total) * kk : 0, T(0));
#pragma omp parallel
  {
    std::vector<T> pad(static_cast<std::size_t>(ph) * pw);
    std::vector<T> dpad(static_cast<std::size_t>(ph) * pw);
#pragma omp for schedule(static)
    for (int nc = 0; nc < total; ++nc) {
      const int n = nc / xs.c, c = nc % xs.c;
      const T* go = dy.plane(n, c);
      const T* wk = w.data() + static_cast<std::size_t>(c) * kk;
      if (dw) detail::pad_plane(x.plane(n, c), xs.h, xs.w, g, ph, pw, pad.data());
      if (dx) std::fill(dpad.begin(), dpad.end(), T(0));
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const T wv = wk[ky * k + kx];
          T acc = 0;
          for (int oy = 0; oy < g.out_h; ++oy) {
            const std::size_t base = static_cast<std::size_t>(oy * s + ky) * pw + kx;
            const T* gl = go + static_cast<std::size_t>(oy) * g.out_w;
            if (dw) {
              const T* line = pad.data() + base;
              for (int ox = 0; ox < g.out_w; ++ox) acc += gl[ox] * line[ox * s];
            }
            if (dx) {
              T* dl = dpad.data() + base;
              for (int ox = 0; ox < g.out_w; ++ox) dl[ox * s] += wv * gl[ox];
            }
          }
          if (dw) dw_part[static_cast<std::size_t>(nc) * kk + ky * k + kx] = acc;
        }
      if (dx) {
        T* d = dx + x.index(n, c, 0, 0);
        for (int y = 0; y < xs.h; ++y) {
          const T* src = dpad.data() + static_cast<std::size_t>(y + g.pad_top) * pw + g.pad_left;
          T* dl = d + static_cast<std::size_t>(y) * xs.w;
          for (int xx = 0; xx < xs.w; ++xx) dl[xx] += src[xx];
        }
      }
    }
  }
  if (dw) {
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c)
        for (std::size_t i = 0; i < kk; ++i)
          dw[static_cast<std::size_t>(c) * kk + i] +=
              dw_part[(static_cast<std::size_t>(n) * xs.c + c) * kk + i];
  }
}

// ---------------------------------------------------------------------------
// Transposed convolution. weight: [in, out, k, k]; output extent
// (in - 1) * stride - 2 * crop + k.

inline ConvGeometry transposed_geometry(int in_h, int in_w, int kernel, int stride, int crop) {
  if (in_h <= 0 || in_w <= 0)
    throw DimensionError("transposed conv: non-positive spatial dims");
  ConvGeometry g;  // expressed as the forward conv that maps output -> input
  g.in_h = (in_h - 1) * stride - 2 * crop + kernel;
  g.in_w = (in_w - 1) * stride - 2 * crop + kernel;
  if (g.in_h <= 0 || g.in_w <= 0)
    throw DimensionError("transposed conv: crop too large for input");
  g.out_h = in_h;
  g.out_w = in_w;
  g.kernel = kernel;
  g.stride = stride;
  g.pad_top = crop;
  g.pad_left = crop;
  return g;
}

template <class T>
Tensor<T> conv_transpose_forward(const Tensor<T>& x, const Tensor<T>& w, const T* bias,
                                 const ConvGeometry& g) {
  const Shape xs = x.shape(), ws = w.shape();
  const int cin = xs.c, cout = ws.c;
  const int kk = cout * g.kernel * g.kernel;
  const std::size_t ip = xs.plane();
  Tensor<T> y(Shape{xs.n, cout, g.in_h, g.in_w});
  detail::CMapMat<T> W(w.data(), cin, kk);
#pragma omp parallel
  {
    std::vector<T> cols(static_cast<std::size_t>(kk) * ip);
#pragma omp for schedule(static)
    for (int n = 0; n < xs.n; ++n) {
      detail::CMapMat<T> X(x.plane(n, 0), cin, ip);
      detail::MapMat<T> C(cols.data(), kk, ip);
      C.noalias() = W.transpose() * X;
      detail::col2im(cols.data(), cout, g, y.plane(n, 0));
      if (bias)
        for (int o = 0; o < cout; ++o) {
          T* p = y.plane(n, o);
          for (std::size_t i = 0; i < y.shape().plane(); ++i) p[i] += bias[o];
        }
    }
  }
  return y;
}

template <class T>
void conv_transpose_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                             const ConvGeometry& g, T* dx, T* dw, T* db) {
  const Shape xs = x.shape(), ws = w.shape();
  const int cin = xs.c, cout = ws.c, nb = xs.n;
  const int kk = cout * g.kernel * g.kernel;
  const std::size_t ip = xs.plane();
  detail::CMapMat<T> W(w.data(), cin, kk);
  std::vector<T> dw_part(dw ? static_cast<std::size_t>(nb) * cin * kk : 0);
#pragma omp parallel
  {
    std::vector<T> cols(static_cast<std::size_t>(kk) * ip);
#pragma omp for schedule(static)
    for (int n = 0; n < nb; ++n) {
      detail::im2col(dy.plane(n, 0), cout, g, cols.data());
      detail::CMapMat<T> C(cols.data(), kk, ip);
      if (dx) {
        detail::MapMat<T> DX(dx + static_cast<std::size_t>(n) * cin * ip, cin, ip);
        DX.noalias() += W * C;
      }
      if (dw) {
        detail::CMapMat<T> X(x.plane(n, 0), cin, ip);
        detail::MapMat<T> DW(dw_part.data() + static_cast<std::size_t>(n) * cin * kk, cin, kk);
        DW.noalias() = X * C.transpose();
      }
    }
  }
  if (dw) {
    const std::size_t len = static_cast<std::size_t>(cin) * kk;
    for (int n = 0; n < nb; ++n)
      for (std::size_t i = 0; i < len; ++i) dw[i] += dw_part[static_cast<std::size_t>(n) * len + i];
  }
  if (db) {
    const std::size_t op = dy.shape().plane();
    for (int o = 0; o < cout; ++o) {
      T acc = 0;
      for (int n = 0; n < nb; ++n) {
        const T* p = dy.plane(n, o);
        for (std::size_t i = 0; i < op; ++i) acc += p[i];
      }
      db[o] += acc;
    }
  }
}

}  // namespace effipose
