#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "birdsong/common.hpp"
#include "birdsong/dsp.hpp"

namespace birdsong {

struct AugmentConfig {
  int noise_overlays_max = 4;
  double noise_overlay_prob = 0.75;
  double noise_volume_jitter = 0.10;
  double same_class_prob = 0.70;
  double same_class_damp_lo = 0.20;
  double same_class_damp_hi = 0.60;
  double neighbor_prob = 0.30;
  double neighbor_damp_center = 0.30;
  double neighbor_damp_jitter = 0.05;
  double volume_jitter = 0.05;
  double pitch_jitter = 0.05;

  /// Every probability and jitter zero: the pipeline reduces to plain features.
  static AugmentConfig disabled() {
    AugmentConfig c;
    c.noise_overlay_prob = c.same_class_prob = c.neighbor_prob = 0.0;
    c.noise_volume_jitter = c.volume_jitter = c.pitch_jitter = 0.0;
    return c;
  }

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(noise_overlay_prob) || !prob(same_class_prob) || !prob(neighbor_prob))
      throw ConfigError("augment: probabilities must lie in [0, 1]");
    if (noise_overlays_max < 0) throw ConfigError("augment: noise_overlays_max must be non-negative");
    if (!(same_class_damp_lo >= 0.0 && same_class_damp_lo <= same_class_damp_hi))
      throw ConfigError("augment: same-class damping range must satisfy 0 <= lo <= hi");
    for (double j : {noise_volume_jitter, neighbor_damp_jitter, volume_jitter, pitch_jitter})
      if (!(j >= 0.0 && j < 1.0)) throw ConfigError("augment: jitters must lie in [0, 1)");
    if (neighbor_damp_center < 0.0) throw ConfigError("augment: neighbor damping must be non-negative");
  }
};

/// What the stochastic stages actually did on one invocation.
struct AugmentTrace {
  int noise_overlays = 0;
  std::vector<double> noise_factors;
  bool noise_pool_empty = false;
  bool same_class_applied = false;
  double same_class_damping = 0.0;
  bool neighbor_applied = false;
  double neighbor_damping = 0.0;
  double volume_factor = 1.0;
  double pitch_factor = 1.0;
  std::optional<std::size_t> cut;

  bool any_overlay() const { return noise_overlays > 0 || same_class_applied || neighbor_applied; }
};

/// Donor signals (e.g. the sound- or noise-masked samples of other recordings).
using SignalPool = std::vector<std::span<const double>>;

/// A `length`-sample excerpt at a random offset. Signals shorter than `length`
/// are first looped (concatenated with themselves) until long enough.
inline std::vector<double> extract_segment(std::span<const double> signal, std::size_t length, RandomSource& rng) {
  if (signal.empty()) throw ValidationError("extract_segment: empty signal");
  const std::size_t copies = (length + signal.size() - 1) / signal.size();
  const std::size_t looped = std::max<std::size_t>(copies, 1) * signal.size();
  const std::size_t start = looped == length ? 0 : rng.index(looped - length + 1);
  std::vector<double> out(length);
  for (std::size_t i = 0; i < length; ++i) out[i] = signal[(start + i) % signal.size()];
  return out;
}

inline void clip_unit(std::vector<double>& x) {
  for (auto& v : x) v = std::clamp(v, -1.0, 1.0);
}

namespace detail {

inline void mix_into(std::vector<double>& seg, std::span<const double> donor, double gain, RandomSource& rng) {
  const auto excerpt = extract_segment(donor, seg.size(), rng);
  for (std::size_t i = 0; i < seg.size(); ++i) seg[i] += gain * excerpt[i];
}

}  // namespace detail

/// Up to `noise_overlays_max` independent trials; each adds a random noise
/// excerpt scaled by 1 +- noise_volume_jitter with probability noise_overlay_prob.
inline std::vector<double> overlay_noise(std::vector<double> seg, const SignalPool& noise_pool, const AugmentConfig& cfg,
                                         RandomSource& rng, AugmentTrace* trace = nullptr) {
  if (noise_pool.empty()) {
    if (trace) trace->noise_pool_empty = true;
    return seg;
  }
  for (int i = 0; i < cfg.noise_overlays_max; ++i) {
    if (!rng.bernoulli(cfg.noise_overlay_prob)) continue;
    const auto& donor = noise_pool[rng.index(noise_pool.size())];
    const double gain = rng.uniform(1.0 - cfg.noise_volume_jitter, 1.0 + cfg.noise_volume_jitter);
    detail::mix_into(seg, donor, gain, rng);
    if (trace) {
      ++trace->noise_overlays;
      trace->noise_factors.push_back(gain);
    }
  }
  clip_unit(seg);
  return seg;
}

/// With probability same_class_prob, adds a same-species excerpt damped by a
/// uniform factor in [same_class_damp_lo, same_class_damp_hi].
inline std::vector<double> combine_same_class(std::vector<double> seg, const SignalPool& same_class_pool,
                                              const AugmentConfig& cfg, RandomSource& rng,
                                              AugmentTrace* trace = nullptr) {
  if (same_class_pool.empty() || !rng.bernoulli(cfg.same_class_prob)) return seg;
  const auto& donor = same_class_pool[rng.index(same_class_pool.size())];
  const double damp = rng.uniform(cfg.same_class_damp_lo, cfg.same_class_damp_hi);
  detail::mix_into(seg, donor, damp, rng);
  clip_unit(seg);
  if (trace) {
    trace->same_class_applied = true;
    trace->same_class_damping = damp;
  }
  return seg;
}

/// With probability neighbor_prob, adds an excerpt of a species recorded within
/// the neighbor box, damped by neighbor_damp_center +- neighbor_damp_jitter.
inline std::vector<double> overlay_neighbor_species(std::vector<double> seg, const SignalPool& neighbor_pool,
                                                    const AugmentConfig& cfg, RandomSource& rng,
                                                    AugmentTrace* trace = nullptr) {
  if (neighbor_pool.empty() || !rng.bernoulli(cfg.neighbor_prob)) return seg;
  const auto& donor = neighbor_pool[rng.index(neighbor_pool.size())];
  const double damp =
      rng.uniform(cfg.neighbor_damp_center - cfg.neighbor_damp_jitter, cfg.neighbor_damp_center + cfg.neighbor_damp_jitter);
  detail::mix_into(seg, donor, damp, rng);
  clip_unit(seg);
  if (trace) {
    trace->neighbor_applied = true;
    trace->neighbor_damping = damp;
  }
  return seg;
}

inline std::vector<double> volume_shift(std::vector<double> seg, const AugmentConfig& cfg, RandomSource& rng,
                                        AugmentTrace* trace = nullptr) {
  const double factor = rng.uniform(1.0 - cfg.volume_jitter, 1.0 + cfg.volume_jitter);
  for (auto& v : seg) v *= factor;
  clip_unit(seg);
  if (trace) trace->volume_factor = factor;
  return seg;
}

/// Output column j is input column (j + c) mod frames.
inline RealMatrix rotate_columns(const RealMatrix& m, std::size_t c) {
  if (m.cols == 0) return m;
  c %= m.cols;
  RealMatrix out(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t j = 0; j < m.cols; ++j) out(r, j) = m(r, (j + c) % m.cols);
  return out;
}

/// Swaps the two halves around a cut point drawn uniformly from [1, frames - 1].
inline MelSpectrogram random_cut(MelSpectrogram m, RandomSource& rng, AugmentTrace* trace = nullptr) {
  if (m.values.cols < 2) return m;
  const auto c = static_cast<std::size_t>(rng.integer(1, static_cast<std::int64_t>(m.values.cols) - 1));
  m.values = rotate_columns(m.values, c);
  if (trace) trace->cut = c;
  return m;
}

/// Rescales the frequency axis: output row r samples input row r * factor by
/// linear interpolation; rows that map past the top are zero.
inline RealMatrix scale_rows(const RealMatrix& m, double factor) {
  if (factor == 1.0) return m;
  RealMatrix out(m.rows, m.cols, 0.0);
  const double top = static_cast<double>(m.rows) - 1.0;
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double x = static_cast<double>(r) * factor;
    if (x > top) continue;
    const auto i0 = static_cast<std::size_t>(std::floor(x));
    const double frac = x - static_cast<double>(i0);
    const std::size_t i1 = std::min(i0 + 1, m.rows - 1);
    for (std::size_t c = 0; c < m.cols; ++c) out(r, c) = (1.0 - frac) * m(i0, c) + frac * m(i1, c);
  }
  return out;
}

inline MelSpectrogram pitch_shift(MelSpectrogram m, const AugmentConfig& cfg, RandomSource& rng,
                                  AugmentTrace* trace = nullptr) {
  const double factor = rng.uniform(1.0 - cfg.pitch_jitter, 1.0 + cfg.pitch_jitter);
  m.values = scale_rows(m.values, factor);
  if (trace) trace->pitch_factor = factor;
  return m;
}

/// Everything the pipeline needs to know about one training example.
struct AugmentSources {
  std::span<const double> sound;  // sound-masked samples of the recording
  SignalPool same_class;
  SignalPool neighbors;
  SignalPool noise;
  double sample_rate = 22050.0;
  std::size_t segment_samples = 32768;
  std::size_t fft_window = 256;
};

/// Segment selection, waveform mixes (same class, neighbor species, noise),
/// volume, features, pitch, and, when any overlay was applied, a random cut.
inline MelSpectrogram augment_pipeline(const AugmentSources& src, const AugmentConfig& cfg, RandomSource& rng,
                                       AugmentTrace* trace = nullptr) {
  cfg.validate();
  AugmentTrace local;
  AugmentTrace& t = trace ? *trace : local;
  t = AugmentTrace{};
  auto seg = extract_segment(src.sound, src.segment_samples, rng);
  seg = combine_same_class(std::move(seg), src.same_class, cfg, rng, &t);
  seg = overlay_neighbor_species(std::move(seg), src.neighbors, cfg, rng, &t);
  seg = overlay_noise(std::move(seg), src.noise, cfg, rng, &t);
  seg = volume_shift(std::move(seg), cfg, rng, &t);
  auto mel = segment_features(seg, src.sample_rate, src.fft_window);
  mel = pitch_shift(std::move(mel), cfg, rng, &t);
  if (t.any_overlay()) mel = random_cut(std::move(mel), rng, &t);
  return mel;
}

}  // namespace birdsong
