#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "birdsong/common.hpp"
#include "birdsong/dsp.hpp"
#include "birdsong/layers.hpp"
#include "birdsong/metadata.hpp"

namespace birdsong {

using nn::Mode;
using nn::Tensor;

struct NetworkConfig {
  std::array<std::size_t, 4> conv_filters{64, 64, 128, 128};
  std::size_t kernel = 3;
  std::size_t metadata_units = 100;
  std::size_t head_units = 512;
  double dropout_input = 0.2;
  double dropout_flatten = 0.4;
  double dropout_head = 0.4;
  std::size_t num_classes = 0;
  std::size_t input_rows = kMelBands;
  std::size_t input_cols = 512;
  std::size_t metadata_size = kMetadataSize;

  std::size_t pooled_rows() const noexcept { return input_rows >> conv_filters.size(); }
  std::size_t pooled_cols() const noexcept { return input_cols >> conv_filters.size(); }
  std::size_t flatten_size() const noexcept { return conv_filters.back() * pooled_rows() * pooled_cols(); }

  void validate() const {
    for (double d : {dropout_input, dropout_flatten, dropout_head})
      if (!(d >= 0.0 && d < 1.0)) throw ConfigError("dropout rates must lie in [0, 1)");
    for (auto f : conv_filters)
      if (f == 0) throw ConfigError("conv filter counts must be positive");
    if (kernel == 0 || kernel % 2 == 0) throw ConfigError("kernel size must be odd");
    if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
    if (metadata_units == 0 || head_units == 0 || metadata_size == 0) throw ConfigError("layer widths must be positive");
    if (pooled_rows() == 0 || pooled_cols() == 0) throw ConfigError("input too small for four pooling stages");
  }

  bool operator==(const NetworkConfig&) const = default;
};

/// Parameter slots in storage order.
enum ParamSlot : std::size_t {
  kConv0W, kConv0B, kConv1W, kConv1B, kConv2W, kConv2B, kConv3W, kConv3B,
  kMetaW, kMetaB, kHeadW, kHeadB, kOutW, kOutB, kParamCount
};

inline const char* param_name(std::size_t slot) {
  static constexpr std::array<const char*, kParamCount> names{
      "conv0.w", "conv0.b", "conv1.w", "conv1.b", "conv2.w", "conv2.b", "conv3.w",
      "conv3.b", "meta.w",  "meta.b",  "head.w",  "head.b",  "out.w",   "out.b"};
  return names.at(slot);
}

inline std::vector<std::vector<std::size_t>> param_shapes(const NetworkConfig& c) {
  std::vector<std::vector<std::size_t>> s;
  std::size_t in = 1;
  for (auto f : c.conv_filters) {
    s.push_back({f, in, c.kernel, c.kernel});
    s.push_back({f});
    in = f;
  }
  s.push_back({c.metadata_units, c.metadata_size});
  s.push_back({c.metadata_units});
  s.push_back({c.head_units, c.flatten_size() + c.metadata_units});
  s.push_back({c.head_units});
  s.push_back({c.num_classes, c.head_units});
  s.push_back({c.num_classes});
  return s;
}

template <typename T>
struct NetworkParams {
  NetworkConfig config;
  std::vector<Tensor<T>> weights;
  std::vector<Tensor<T>> velocity;

  bool operator==(const NetworkParams&) const = default;
};

template <typename T>
std::vector<Tensor<T>> zero_like(const NetworkConfig& config) {
  std::vector<Tensor<T>> out;
  for (auto& s : param_shapes(config)) out.emplace_back(s, T(0));
  return out;
}

/// Weights uniform in +-sqrt(6 / fan_in) (variance 2 / fan_in), biases and velocities zero.
template <typename T>
NetworkParams<T> init_params(const NetworkConfig& config, RandomSource& rng) {
  config.validate();
  NetworkParams<T> p{config, zero_like<T>(config), zero_like<T>(config)};
  for (std::size_t slot = 0; slot < kParamCount; slot += 2) {
    auto& w = p.weights[slot];
    const std::size_t fan_in = w.size() / w.dim(0);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : w.data) v = static_cast<T>(rng.uniform(-limit, limit));
  }
  return p;
}

template <typename T>
NetworkParams<T> zero_params(const NetworkConfig& config) {
  config.validate();
  return {config, zero_like<T>(config), zero_like<T>(config)};
}

template <typename To, typename From>
NetworkParams<To> cast_params(const NetworkParams<From>& p) {
  NetworkParams<To> out{p.config, {}, {}};
  auto conv = [](const std::vector<Tensor<From>>& v) {
    std::vector<Tensor<To>> r;
    for (auto& t : v) {
      Tensor<To> c(t.shape);
      for (std::size_t i = 0; i < t.size(); ++i) c.data[i] = static_cast<To>(t.data[i]);
      r.push_back(std::move(c));
    }
    return r;
  };
  out.weights = conv(p.weights);
  out.velocity = conv(p.velocity);
  return out;
}

/// Everything backward needs from one forward pass.
template <typename T>
struct ForwardCache {
  std::vector<T> input_mask;
  std::array<nn::Conv2dCache<T>, 4> conv;
  std::array<Tensor<T>, 4> activated;  // ELU outputs before pooling
  std::array<nn::PoolCache, 4> pool;
  std::vector<T> flat_mask;
  std::vector<T> meta_input;
  Tensor<T> meta_hidden;  // ELU output
  std::vector<T> joined;  // [dropped flatten, meta_hidden]
  Tensor<T> head_hidden;  // ELU output before dropout
  std::vector<T> head_mask;
  std::vector<T> head_out;  // after dropout
  std::vector<T> logits;
};

/// Returns the class logits. `spec` is rows x cols row-major, `meta` has metadata_size entries.
template <typename T>
std::vector<T> forward_logits(const NetworkParams<T>& p, std::span<const T> spec, std::span<const T> meta, Mode mode,
                              RandomSource& rng, ForwardCache<T>* cache = nullptr) {
  const auto& c = p.config;
  const auto& w = p.weights;
  nn::require_shape(spec.size() == c.input_rows * c.input_cols, "spectrogram input size");
  nn::require_shape(meta.size() == c.metadata_size, "metadata input size");
  ForwardCache<T> local;
  ForwardCache<T>& fc = cache ? *cache : local;

  Tensor<T> x({1, c.input_rows, c.input_cols});
  std::copy(spec.begin(), spec.end(), x.data.begin());
  x = nn::dropout(std::move(x), c.dropout_input, mode, rng, &fc.input_mask);
  for (std::size_t l = 0; l < 4; ++l) {
    fc.activated[l] = nn::elu(nn::conv2d(x, w[2 * l], w[2 * l + 1], &fc.conv[l]));
    x = nn::maxpool2d(fc.activated[l], &fc.pool[l]);
  }
  x.shape = {x.size()};
  x = nn::dropout(std::move(x), c.dropout_flatten, mode, rng, &fc.flat_mask);

  fc.meta_input.assign(meta.begin(), meta.end());
  fc.meta_hidden = nn::elu(nn::dense<T>(fc.meta_input, w[kMetaW], w[kMetaB]));

  fc.joined = std::move(x.data);
  fc.joined.insert(fc.joined.end(), fc.meta_hidden.data.begin(), fc.meta_hidden.data.end());
  fc.head_hidden = nn::elu(nn::dense<T>(fc.joined, w[kHeadW], w[kHeadB]));
  fc.head_out = nn::dropout(fc.head_hidden, c.dropout_head, mode, rng, &fc.head_mask).data;
  fc.logits = nn::dense<T>(fc.head_out, w[kOutW], w[kOutB]).data;
  return fc.logits;
}

template <typename T>
std::vector<T> forward(const NetworkParams<T>& p, std::span<const T> spec, std::span<const T> meta, Mode mode,
                       RandomSource& rng) {
  const auto logits = forward_logits(p, spec, meta, mode, rng);
  return nn::softmax<T>(logits);
}

/// Inference-mode class probabilities; no randomness is consumed.
template <typename T>
std::vector<T> predict_probabilities(const NetworkParams<T>& p, std::span<const T> spec, std::span<const T> meta) {
  RandomSource unused(0);
  return forward(p, spec, meta, Mode::Infer, unused);
}

/// Backpropagates dL/dlogits through a cached forward pass, accumulating into `grads`.
template <typename T>
void backward(const NetworkParams<T>& p, const ForwardCache<T>& fc, std::span<const T> dlogits,
              std::vector<Tensor<T>>& grads) {
  const auto& c = p.config;
  const auto& w = p.weights;
  Tensor<T> dh = nn::dense_backward<T>(fc.head_out, w[kOutW], dlogits, grads[kOutW], grads[kOutB]);
  for (std::size_t i = 0; i < dh.size(); ++i) dh.data[i] *= fc.head_mask[i];
  nn::elu_backward(fc.head_hidden, dh);
  Tensor<T> djoined = nn::dense_backward<T>(fc.joined, w[kHeadW], dh.data, grads[kHeadW], grads[kHeadB]);

  const std::size_t flat = c.flatten_size();
  Tensor<T> dmeta({c.metadata_units});
  std::copy(djoined.data.begin() + static_cast<std::ptrdiff_t>(flat), djoined.data.end(), dmeta.data.begin());
  nn::elu_backward(fc.meta_hidden, dmeta);
  nn::dense_backward<T>(fc.meta_input, w[kMetaW], dmeta.data, grads[kMetaW], grads[kMetaB]);

  Tensor<T> dx({c.conv_filters.back(), c.pooled_rows(), c.pooled_cols()});
  for (std::size_t i = 0; i < flat; ++i) dx.data[i] = djoined.data[i] * fc.flat_mask[i];
  for (std::size_t l = 4; l-- > 0;) {
    dx = nn::maxpool2d_backward(fc.pool[l], dx);
    nn::elu_backward(fc.activated[l], dx);
    dx = nn::conv2d_backward(fc.conv[l], w[2 * l], dx, grads[2 * l], grads[2 * l + 1]);
  }
}

/// Forward in the given mode, cross-entropy against `target`, gradients accumulated into `grads`.
template <typename T>
T loss_and_gradient(const NetworkParams<T>& p, std::span<const T> spec, std::span<const T> meta, std::size_t target,
                    Mode mode, RandomSource& rng, std::vector<Tensor<T>>& grads) {
  ForwardCache<T> fc;
  const auto logits = forward_logits(p, spec, meta, mode, rng, &fc);
  const auto lg = nn::softmax_cross_entropy<T>(logits, target);
  backward<T>(p, fc, lg.grad, grads);
  return lg.loss;
}

/// v <- mu v - lr g;  p <- p + mu v - lr g.
template <typename T>
void sgd_nesterov_step(NetworkParams<T>& p, const std::vector<Tensor<T>>& grads, double lr, double momentum) {
  if (grads.size() != p.weights.size() || p.velocity.size() != p.weights.size())
    throw ValidationError("sgd_nesterov_step: parameter/gradient/velocity count mismatch");
  const T mu = static_cast<T>(momentum), eta = static_cast<T>(lr);
  for (std::size_t s = 0; s < p.weights.size(); ++s) {
    auto& w = p.weights[s].data;
    auto& v = p.velocity[s].data;
    const auto& g = grads[s].data;
    if (g.size() != w.size() || v.size() != w.size()) throw ValidationError("sgd_nesterov_step: shape mismatch");
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = mu * v[i] - eta * g[i];
      w[i] += mu * v[i] - eta * g[i];
    }
  }
}

}  // namespace birdsong
