#pragma once

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "effipose/autograd.hpp"
#include "effipose/kernels.hpp"

namespace effipose {

enum class Mode { train, infer };

enum class ActivationKind { linear, sigmoid, swish, eswish };

inline const char* to_string(ActivationKind k) {
  switch (k) {
    case ActivationKind::linear: return "linear";
    case ActivationKind::sigmoid: return "sigmoid";
    case ActivationKind::swish: return "swish";
    case ActivationKind::eswish: return "eswish";
  }
  return "?";
}

/// E-swish slope used throughout the detection blocks.
inline constexpr double kEswishBeta = 1.25;

namespace detail {

template <class T>
void accumulate(const Var<T>& target, const Tensor<T>& g) {
  if (!target->requires_grad) return;
  auto& buf = target->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

template <class T>
T* grad_ptr(const Var<T>& v) {
  return v && v->requires_grad ? v->grad_buffer().data() : nullptr;
}

}  // namespace detail

// ---------------------------------------------------------------------------

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride,
              Padding padding) {
  const Shape xs = x->shape(), ws = w->shape();
  if (ws.c != xs.c) throw DimensionError(axis_mismatch("conv2d", "in_channels(weight.c vs input.c)", ws.c, xs.c));
  if (ws.h != ws.w) throw DimensionError("conv2d: kernel must be square, got " + ws.str());
  if (bias && bias->value.size() != static_cast<std::size_t>(ws.n))
    throw DimensionError(axis_mismatch("conv2d", "bias", static_cast<int>(bias->value.size()), ws.n));
  const ConvGeometry g = conv_geometry(xs.h, xs.w, ws.h, stride, padding);
  auto y = conv2d_forward(x->value, w->value, bias ? bias->value.data() : nullptr, g);
  std::vector<Var<T>> parents{x, w};
  if (bias) parents.push_back(bias);
  return make_result<T>(std::move(y), parents, [x, w, bias, g](Node<T>& self) {
    conv2d_backward(x->value, w->value, self.grad, g, detail::grad_ptr(x),
                    detail::grad_ptr(w), detail::grad_ptr(bias));
  });
}

template <class T>
Var<T> depthwise_conv2d(const Var<T>& x, const Var<T>& w, int stride, Padding padding) {
  const Shape xs = x->shape(), ws = w->shape();
  if (ws.n != xs.c)
    throw DimensionError(axis_mismatch("depthwise_conv2d", "channels(weight.n vs input.c)", ws.n, xs.c));
  if (ws.c != 1) throw DimensionError(axis_mismatch("depthwise_conv2d", "weight.c", ws.c, 1));
  if (ws.h != ws.w) throw DimensionError("depthwise_conv2d: kernel must be square");
  const ConvGeometry g = conv_geometry(xs.h, xs.w, ws.h, stride, padding);
  auto y = depthwise_forward(x->value, w->value, g);
  return make_result<T>(std::move(y), {x, w}, [x, w, g](Node<T>& self) {
    depthwise_backward(x->value, w->value, self.grad, g, detail::grad_ptr(x),
                       detail::grad_ptr(w));
  });
}

/// Transposed convolution; weight [in, out, k, k]. With k = 4, stride 2 and
/// crop 1 the output is exactly twice the input extent.
template <class T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride,
                        int crop) {
  const Shape xs = x->shape(), ws = w->shape();
  if (ws.n != xs.c)
    throw DimensionError(axis_mismatch("conv_transpose2d", "in_channels(weight.n vs input.c)", ws.n, xs.c));
  if (ws.h != ws.w) throw DimensionError("conv_transpose2d: kernel must be square");
  const ConvGeometry g = transposed_geometry(xs.h, xs.w, ws.h, stride, crop);
  auto y = conv_transpose_forward(x->value, w->value, bias ? bias->value.data() : nullptr, g);
  std::vector<Var<T>> parents{x, w};
  if (bias) parents.push_back(bias);
  return make_result<T>(std::move(y), parents, [x, w, bias, g](Node<T>& self) {
    conv_transpose_backward(x->value, w->value, self.grad, g, detail::grad_ptr(x),
                            detail::grad_ptr(w), detail::grad_ptr(bias));
  });
}

/// Per-channel kernel of the factor-2 bilinear upsampler: outer product of
/// [0.25, 0.75, 0.75, 0.25].
template <class T>
std::array<T, 16> bilinear_kernel4() {
  constexpr double v[4] = {0.25, 0.75, 0.75, 0.25};
  std::array<T, 16> k{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) k[i * 4 + j] = static_cast<T>(v[i] * v[j]);
  return k;
}

/// Weight [Q, Q, 4, 4] that upsamples each channel bilinearly without mixing.
template <class T>
Tensor<T> bilinear_upsampling_weight(int channels) {
  Tensor<T> w(Shape{channels, channels, 4, 4});
  const auto k = bilinear_kernel4<T>();
  for (int c = 0; c < channels; ++c)
    std::copy(k.begin(), k.end(), w.plane(c, c));
  return w;
}

// ---------------------------------------------------------------------------

struct BatchNormConfig {
  double epsilon = 1e-3;
  double momentum = 0.99;
};

/// Batch normalization over (N, H, W) per channel. In train mode the running
/// statistics held by `running_mean`/`running_var` are updated in place.
template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  const Var<T>& running_mean, const Var<T>& running_var, Mode mode,
                  BatchNormConfig cfg = {}) {
  const Shape s = x->shape();
  const std::size_t C = static_cast<std::size_t>(s.c);
  for (const auto* v : {&gamma, &beta, &running_mean, &running_var})
    if ((*v)->value.size() != C)
      throw DimensionError(axis_mismatch("batch_norm", "channels", static_cast<int>((*v)->value.size()), s.c));
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(s.n) * plane;
  std::vector<T> mean(C), inv(C);
  if (mode == Mode::train) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < s.c; ++c) {
      double sum = 0, sq = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = x->value.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const double m = sum / count;
      for (int n = 0; n < s.n; ++n) {
        const T* p = x->value.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - m;
          sq += d * d;
        }
      }
      const double var = sq / count;
      mean[c] = static_cast<T>(m);
      inv[c] = static_cast<T>(1.0 / std::sqrt(var + cfg.epsilon));
      auto& rm = running_mean->value[c];
      auto& rv = running_var->value[c];
      const double unbiased = count > 1 ? sq / (count - 1) : var;
      rm = static_cast<T>(cfg.momentum * rm + (1 - cfg.momentum) * m);
      rv = static_cast<T>(cfg.momentum * rv + (1 - cfg.momentum) * unbiased);
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = running_mean->value[c];
      inv[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var->value[c]) + cfg.epsilon));
    }
  }
  Tensor<T> y(s);
#pragma omp parallel for schedule(static)
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = x->value.plane(n, c);
      T* q = y.plane(n, c);
      const T a = gamma->value[c] * inv[c];
      const T b = beta->value[c] - a * mean[c];
      for (std::size_t i = 0; i < plane; ++i) q[i] = a * p[i] + b;
    }
  const bool batch_stats = mode == Mode::train;
  return make_result<T>(std::move(y), {x, gamma, beta},
                        [x, gamma, beta, mean, inv, batch_stats, count, plane](Node<T>& self) {
    const Shape s = x->shape();
    T* dx = detail::grad_ptr(x);
    T* dg = detail::grad_ptr(gamma);
    T* db = detail::grad_ptr(beta);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < s.c; ++c) {
      double sum_dy = 0, sum_dy_xhat = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = x->value.plane(n, c);
        const T* g = self.grad.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += g[i];
          sum_dy_xhat += static_cast<double>(g[i]) * (p[i] - mean[c]) * inv[c];
        }
      }
      if (dg) dg[c] += static_cast<T>(sum_dy_xhat);
      if (db) db[c] += static_cast<T>(sum_dy);
      if (!dx) continue;
      const T gm = gamma->value[c];
      for (int n = 0; n < s.n; ++n) {
        const T* p = x->value.plane(n, c);
        const T* g = self.grad.plane(n, c);
        T* d = dx + x->value.index(n, c, 0, 0);
        if (batch_stats) {
          const double k = gm * inv[c] / count;
          for (std::size_t i = 0; i < plane; ++i) {
            const double xhat = (p[i] - mean[c]) * inv[c];
            d[i] += static_cast<T>(k * (count * g[i] - sum_dy - xhat * sum_dy_xhat));
          }
        } else {
          const T k = gm * inv[c];
          for (std::size_t i = 0; i < plane; ++i) d[i] += k * g[i];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------

template <class T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <class T>
Var<T> activation(const Var<T>& x, ActivationKind kind, double beta = kEswishBeta) {
  if (kind == ActivationKind::eswish && !(beta > 0))
    throw ConfigError("eswish beta must be positive");
  if (kind == ActivationKind::linear) return x;
  const T b = kind == ActivationKind::eswish ? static_cast<T>(beta) : T(1);
  const Tensor<T>& in = x->value;
  Tensor<T> y(in.shape());
  const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(in.size());
  if (kind == ActivationKind::sigmoid) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < len; ++i) y[i] = sigmoid(in[i]);
  } else {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < len; ++i) y[i] = b * in[i] * sigmoid(in[i]);
  }
  return make_result<T>(std::move(y), {x}, [x, kind, b](Node<T>& self) {
    auto& dx = x->grad_buffer();
    const Tensor<T>& in = x->value;
    const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(in.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < len; ++i) {
      const T s = sigmoid(in[i]);
      const T d = kind == ActivationKind::sigmoid ? s * (T(1) - s)
                                                  : b * (s + in[i] * s * (T(1) - s));
      dx[i] += d * self.grad[i];
    }
  });
}

// ---------------------------------------------------------------------------

/// Average pooling with a square window and no padding.
template <class T>
Var<T> avg_pool(const Var<T>& x, int window, int stride) {
  const Shape s = x->shape();
  if (window < 1 || stride < 1) throw ConfigError("avg_pool: window and stride must be >= 1");
  if (window > s.h || window > s.w)
    throw DimensionError("avg_pool: window " + std::to_string(window) + " larger than input " +
                         std::to_string(s.h) + "x" + std::to_string(s.w));
  const int oh = (s.h - window) / stride + 1, ow = (s.w - window) / stride + 1;
  const T scale = T(1) / static_cast<T>(window * window);
  Tensor<T> y(Shape{s.n, s.c, oh, ow});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = x->value.plane(n, c);
      T* q = y.plane(n, c);
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T acc = 0;
          for (int ky = 0; ky < window; ++ky)
            for (int kx = 0; kx < window; ++kx)
              acc += p[(oy * stride + ky) * s.w + ox * stride + kx];
          q[oy * ow + ox] = acc * scale;
        }
    }
  return make_result<T>(std::move(y), {x}, [x, window, stride, oh, ow, scale](Node<T>& self) {
    const Shape s = x->shape();
    auto& dx = x->grad_buffer();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        T* d = dx.plane(n, c);
        const T* g = self.grad.plane(n, c);
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            const T v = g[oy * ow + ox] * scale;
            for (int ky = 0; ky < window; ++ky)
              for (int kx = 0; kx < window; ++kx)
                d[(oy * stride + ky) * s.w + ox * stride + kx] += v;
          }
      }
  });
}

template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
  const Shape s = x->shape();
  const std::size_t plane = s.plane();
  Tensor<T> y(Shape{s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = x->value.plane(n, c);
      T acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      y.at(n, c, 0, 0) = acc / static_cast<T>(plane);
    }
  return make_result<T>(std::move(y), {x}, [x, plane](Node<T>& self) {
    const Shape s = x->shape();
    auto& dx = x->grad_buffer();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const T g = self.grad.at(n, c, 0, 0) / static_cast<T>(plane);
        T* d = dx.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) d[i] += g;
      }
  });
}

// ---------------------------------------------------------------------------

template <class T>
Var<T> concat(std::span<const Var<T>> inputs) {
  if (inputs.empty()) throw DimensionError("concat: empty input list");
  if (inputs.size() == 1) return inputs[0];
  const Shape s0 = inputs[0]->shape();
  int channels = 0;
  for (const auto& v : inputs) {
    const Shape s = v->shape();
    if (s.n != s0.n) throw DimensionError(axis_mismatch("concat", "N", s.n, s0.n));
    if (s.h != s0.h) throw DimensionError(axis_mismatch("concat", "H", s.h, s0.h));
    if (s.w != s0.w) throw DimensionError(axis_mismatch("concat", "W", s.w, s0.w));
    channels += s.c;
  }
  Tensor<T> y(Shape{s0.n, channels, s0.h, s0.w});
  const std::size_t plane = s0.plane();
  for (int n = 0; n < s0.n; ++n) {
    int offset = 0;
    for (const auto& v : inputs) {
      const int c = v->shape().c;
      std::copy_n(v->value.plane(n, 0), c * plane, y.plane(n, offset));
      offset += c;
    }
  }
  std::vector<Var<T>> parents(inputs.begin(), inputs.end());
  return make_result<T>(std::move(y), parents, [parents, plane](Node<T>& self) {
    const int nb = self.shape().n;
    int offset = 0;
    for (const auto& v : parents) {
      const int c = v->shape().c;
      if (v->requires_grad) {
        auto& d = v->grad_buffer();
        for (int n = 0; n < nb; ++n) {
          const T* g = self.grad.plane(n, offset);
          T* dst = d.plane(n, 0);
          for (std::size_t i = 0; i < c * plane; ++i) dst[i] += g[i];
        }
      }
      offset += c;
    }
  });
}

template <class T>
Var<T> concat(std::initializer_list<Var<T>> inputs) {
  std::vector<Var<T>> v(inputs);
  return concat<T>(std::span<const Var<T>>(v));
}

template <class T>
Var<T> residual_add(const Var<T>& a, const Var<T>& b) {
  if (!(a->shape() == b->shape()))
    throw DimensionError("residual_add: " + a->shape().str() + " vs " + b->shape().str());
  Tensor<T> y(a->shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->value[i] + b->value[i];
  return make_result<T>(std::move(y), {a, b}, [a, b](Node<T>& self) {
    detail::accumulate(a, self.grad);
    detail::accumulate(b, self.grad);
  });
}

/// Scales each channel of `map` by gate[n, c] (squeeze-and-excitation).
template <class T>
Var<T> broadcast_mul(const Var<T>& map, const Var<T>& gate) {
  const Shape s = map->shape(), gs = gate->shape();
  if (gs.n != s.n || gs.c != s.c || gs.h != 1 || gs.w != 1)
    throw DimensionError("broadcast_mul: gate " + gs.str() + " does not match map " + s.str());
  const std::size_t plane = s.plane();
  Tensor<T> y(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T g = gate->value.at(n, c, 0, 0);
      const T* p = map->value.plane(n, c);
      T* q = y.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) q[i] = p[i] * g;
    }
  return make_result<T>(std::move(y), {map, gate}, [map, gate, plane](Node<T>& self) {
    const Shape s = map->shape();
    T* dm = detail::grad_ptr(map);
    T* dg = detail::grad_ptr(gate);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const T g = gate->value.at(n, c, 0, 0);
        const T* p = map->value.plane(n, c);
        const T* go = self.grad.plane(n, c);
        T acc = 0;
        for (std::size_t i = 0; i < plane; ++i) {
          acc += go[i] * p[i];
          if (dm) dm[map->value.index(n, c, 0, 0) + i] += go[i] * g;
        }
        if (dg) dg[gate->value.index(n, c, 0, 0)] += acc;
      }
  });
}

/// Inverted dropout: identity in infer mode, keep-and-rescale by
/// 1 / (1 - rate) in train mode.
template <class T, class Rng>
Var<T> dropout(const Var<T>& x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  if (mode == Mode::infer || rate == 0.0) return x;
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<T> mask(x->value.size());
  for (auto& m : mask) m = keep(rng) ? scale : T(0);
  Tensor<T> y(x->shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x->value[i] * mask[i];
  return make_result<T>(std::move(y), {x}, [x, mask = std::move(mask)](Node<T>& self) {
    auto& d = x->grad_buffer();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * mask[i];
  });
}

/// Mean squared error over every element of every (prediction, target) pair.
template <class T>
Var<T> mse_loss(std::span<const Var<T>> preds, std::span<const Tensor<T>> targets) {
  if (preds.empty()) throw DimensionError("mse_loss: empty prediction list");
  if (preds.size() != targets.size())
    throw DimensionError(axis_mismatch("mse_loss", "list length", static_cast<int>(preds.size()),
                                       static_cast<int>(targets.size())));
  std::size_t count = 0;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    if (!(preds[k]->shape() == targets[k].shape()))
      throw DimensionError("mse_loss: pair " + std::to_string(k) + " shape " +
                           preds[k]->shape().str() + " vs " + targets[k].shape().str());
    count += targets[k].size();
  }
  double sum = 0;
  for (std::size_t k = 0; k < preds.size(); ++k)
    for (std::size_t i = 0; i < targets[k].size(); ++i) {
      const double d = static_cast<double>(preds[k]->value[i]) - targets[k][i];
      sum += d * d;
    }
  std::vector<Var<T>> parents(preds.begin(), preds.end());
  std::vector<Tensor<T>> tgt(targets.begin(), targets.end());
  return make_result<T>(Tensor<T>::scalar(static_cast<T>(sum / count)), parents,
                        [parents, tgt = std::move(tgt), count](Node<T>& self) {
    const T k = self.grad[0] * T(2) / static_cast<T>(count);
    for (std::size_t p = 0; p < parents.size(); ++p) {
      if (!parents[p]->requires_grad) continue;
      auto& d = parents[p]->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i)
        d[i] += k * (parents[p]->value[i] - tgt[p][i]);
    }
  });
}

template <class T>
Var<T> mse_loss(const std::vector<Var<T>>& preds, const std::vector<Tensor<T>>& targets) {
  return mse_loss<T>(std::span<const Var<T>>(preds), std::span<const Tensor<T>>(targets));
}

}  // namespace effipose
