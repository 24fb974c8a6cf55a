#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "birdsong/common.hpp"

namespace birdsong::nn {

/// Dense row-major tensor.
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, T fill = T{}) : shape(std::move(s)), data(count(shape), fill) {}

  static std::size_t count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }
  std::size_t size() const noexcept { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool operator==(const Tensor&) const = default;
};

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMajor<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMajor<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ValidationError("shape mismatch: " + what);
}

// ---------------------------------------------------------------------------
// ELU (alpha = 1)

template <typename T>
T elu(T x) {
  return x > T(0) ? x : std::expm1(x);
}

template <typename T>
Tensor<T> elu(Tensor<T> x) {
  for (auto& v : x.data) v = elu(v);
  return x;
}

/// dL/dx from the ELU output y: 1 where y > 0, y + 1 elsewhere.
template <typename T>
void elu_backward(const Tensor<T>& y, Tensor<T>& grad) {
  for (std::size_t i = 0; i < y.size(); ++i)
    if (!(y.data[i] > T(0))) grad.data[i] *= y.data[i] + T(1);
}

// ---------------------------------------------------------------------------
// 2-D convolution, one sample in (C, H, W) layout, stride 1, zero "same" padding.

template <typename T>
struct Conv2dCache {
  RowMajor<T> columns;  // (C*k*k) x (H*W)
  std::size_t channels = 0, height = 0, width = 0;
};

namespace detail {

template <typename T>
void im2col(const Tensor<T>& x, std::size_t k, RowMajor<T>& cols) {
  const std::size_t c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
  const long pad = static_cast<long>(k / 2);
  cols.setZero(static_cast<Eigen::Index>(c_in * k * k), static_cast<Eigen::Index>(h * w));
  for (std::size_t c = 0; c < c_in; ++c)
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* row = cols.data() + ((c * k + ki) * k + kj) * h * w;
        const T* src = x.data.data() + c * h * w;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + static_cast<long>(ki) - pad;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          const long dx = static_cast<long>(kj) - pad;
          const long x_lo = std::max(0L, -dx), x_hi = std::min(static_cast<long>(w), static_cast<long>(w) - dx);
          for (long xx = x_lo; xx < x_hi; ++xx)
            row[y * w + static_cast<std::size_t>(xx)] = src[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(xx + dx)];
        }
      }
}

template <typename T>
void col2im(const RowMajor<T>& cols, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k, Tensor<T>& dx) {
  const long pad = static_cast<long>(k / 2);
  dx = Tensor<T>({c_in, h, w}, T(0));
  for (std::size_t c = 0; c < c_in; ++c)
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* row = cols.data() + ((c * k + ki) * k + kj) * h * w;
        T* dst = dx.data.data() + c * h * w;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + static_cast<long>(ki) - pad;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          const long d = static_cast<long>(kj) - pad;
          const long x_lo = std::max(0L, -d), x_hi = std::min(static_cast<long>(w), static_cast<long>(w) - d);
          for (long xx = x_lo; xx < x_hi; ++xx)
            dst[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(xx + d)] += row[y * w + static_cast<std::size_t>(xx)];
        }
      }
}

}  // namespace detail

/// Cross-correlation of x (C, H, W) with weights (F, C, k, k) plus bias (F).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dCache<T>* cache = nullptr) {
  require_shape(x.shape.size() == 3 && weight.shape.size() == 4, "conv2d expects (C,H,W) input and (F,C,k,k) weights");
  const std::size_t f = weight.dim(0), c_in = weight.dim(1), k = weight.dim(2);
  require_shape(x.dim(0) == c_in, "conv2d input channels");
  require_shape(weight.dim(3) == k && k % 2 == 1, "conv2d kernel must be square and odd");
  require_shape(bias.size() == f, "conv2d bias");
  const std::size_t h = x.dim(1), w = x.dim(2);
  Conv2dCache<T> local;
  Conv2dCache<T>& c = cache ? *cache : local;
  detail::im2col(x, k, c.columns);
  c.channels = c_in;
  c.height = h;
  c.width = w;
  Tensor<T> y({f, h, w});
  MatMap<T> out(y.data.data(), static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(h * w));
  ConstMatMap<T> wm(weight.data.data(), static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(c_in * k * k));
  out.noalias() = wm * c.columns;
  for (std::size_t i = 0; i < f; ++i) out.row(static_cast<Eigen::Index>(i)).array() += bias.data[i];
  return y;
}

/// Accumulates weight/bias gradients and returns dL/dx.
template <typename T>
Tensor<T> conv2d_backward(const Conv2dCache<T>& cache, const Tensor<T>& weight, const Tensor<T>& dy, Tensor<T>& dweight,
                          Tensor<T>& dbias) {
  const std::size_t f = weight.dim(0), k = weight.dim(2);
  const auto hw = static_cast<Eigen::Index>(cache.height * cache.width);
  const auto ckk = static_cast<Eigen::Index>(cache.channels * k * k);
  ConstMatMap<T> g(dy.data.data(), static_cast<Eigen::Index>(f), hw);
  MatMap<T> dw(dweight.data.data(), static_cast<Eigen::Index>(f), ckk);
  dw.noalias() += g * cache.columns.transpose();
  for (std::size_t i = 0; i < f; ++i) dbias.data[i] += g.row(static_cast<Eigen::Index>(i)).sum();
  ConstMatMap<T> wm(weight.data.data(), static_cast<Eigen::Index>(f), ckk);
  RowMajor<T> dcols = wm.transpose() * g;
  Tensor<T> dx;
  detail::col2im(dcols, cache.channels, cache.height, cache.width, k, dx);
  return dx;
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2. Odd trailing rows/columns are dropped.

struct PoolCache {
  std::vector<std::uint32_t> argmax;  // flat input index per output element
  std::vector<std::size_t> input_shape;
};

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, PoolCache* cache = nullptr) {
  require_shape(x.shape.size() == 3 && x.dim(1) >= 2 && x.dim(2) >= 2, "maxpool2d needs (C,H,W) with H,W >= 2");
  const std::size_t c_n = x.dim(0), h = x.dim(1), w = x.dim(2), oh = h / 2, ow = w / 2;
  Tensor<T> y({c_n, oh, ow});
  if (cache) {
    cache->argmax.resize(y.size());
    cache->input_shape = x.shape;
  }
  for (std::size_t c = 0; c < c_n; ++c)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = (c * h + 2 * i) * w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = (c * h + 2 * i + di) * w + 2 * j + dj;
            if (x.data[idx] > x.data[best]) best = idx;  // first occurrence wins ties
          }
        const std::size_t o = (c * oh + i) * ow + j;
        y.data[o] = x.data[best];
        if (cache) cache->argmax[o] = static_cast<std::uint32_t>(best);
      }
  return y;
}

template <typename T>
Tensor<T> maxpool2d_backward(const PoolCache& cache, const Tensor<T>& dy) {
  Tensor<T> dx(cache.input_shape, T(0));
  for (std::size_t o = 0; o < dy.size(); ++o) dx.data[cache.argmax[o]] += dy.data[o];
  return dx;
}

// ---------------------------------------------------------------------------
// Fully connected: y = W x + b with W (out, in).

template <typename T>
Tensor<T> dense(std::span<const T> x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_shape(weight.shape.size() == 2 && weight.dim(1) == x.size(), "dense input width");
  require_shape(bias.size() == weight.dim(0), "dense bias");
  Tensor<T> y({weight.dim(0)});
  ConstMatMap<T> wm(weight.data.data(), static_cast<Eigen::Index>(weight.dim(0)), static_cast<Eigen::Index>(weight.dim(1)));
  VecMap<T>(y.data.data(), static_cast<Eigen::Index>(y.size())).noalias() =
      wm * ConstVecMap<T>(x.data(), static_cast<Eigen::Index>(x.size())) +
      ConstVecMap<T>(bias.data.data(), static_cast<Eigen::Index>(bias.size()));
  return y;
}

template <typename T>
Tensor<T> dense_backward(std::span<const T> x, const Tensor<T>& weight, std::span<const T> dy, Tensor<T>& dweight,
                         Tensor<T>& dbias) {
  const auto out = static_cast<Eigen::Index>(weight.dim(0)), in = static_cast<Eigen::Index>(weight.dim(1));
  ConstVecMap<T> g(dy.data(), out);
  MatMap<T>(dweight.data.data(), out, in).noalias() += g * ConstVecMap<T>(x.data(), in).transpose();
  VecMap<T>(dbias.data.data(), out) += g;
  Tensor<T> dx({weight.dim(1)});
  VecMap<T>(dx.data.data(), in).noalias() = ConstMatMap<T>(weight.data.data(), out, in).transpose() * g;
  return dx;
}

// ---------------------------------------------------------------------------
// Inverted dropout

enum class Mode { Train, Infer };

/// Train mode zeroes each element with probability `rate` and scales survivors
/// by 1 / (1 - rate); infer mode is the identity. `mask` receives the per-element scale.
template <typename T>
Tensor<T> dropout(Tensor<T> x, double rate, Mode mode, RandomSource& rng, std::vector<T>* mask = nullptr) {
  if (mask) mask->assign(x.size(), T(1));
  if (mode == Mode::Infer || rate <= 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::bernoulli_distribution drop(rate);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T s = drop(rng.engine()) ? T(0) : keep_scale;
    x.data[i] *= s;
    if (mask) (*mask)[i] = s;
  }
  return x;
}

// ---------------------------------------------------------------------------
// Softmax and loss

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  const T top = *std::max_element(logits.begin(), logits.end());
  std::vector<T> p(logits.size());
  T sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += p[i] = std::exp(logits[i] - top);
  for (auto& v : p) v /= sum;
  return p;
}

template <typename T>
struct LossAndGrad {
  T loss;
  std::vector<T> grad;
};

/// -log softmax(logits)[target] via log-sum-exp; gradient softmax - onehot.
template <typename T>
LossAndGrad<T> softmax_cross_entropy(std::span<const T> logits, std::size_t target) {
  if (target >= logits.size()) throw ValidationError("softmax_cross_entropy: target out of range");
  const T top = *std::max_element(logits.begin(), logits.end());
  T sum = 0;
  for (T v : logits) sum += std::exp(v - top);
  const T log_z = top + std::log(sum);
  LossAndGrad<T> out{log_z - logits[target], softmax(logits)};
  out.grad[target] -= T(1);
  return out;
}

}  // namespace birdsong::nn
