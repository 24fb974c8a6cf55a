// Straight-line reference implementations used as test oracles. They share no
// code with the library routines they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "birdsong/corpus.hpp"

namespace birdsong::oracle {

using Grid = std::vector<std::vector<double>>;
using Bits = std::vector<std::vector<int>>;

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

inline Bits clip(const Grid& s, double factor) {
  const std::size_t rows = s.size(), cols = s[0].size();
  Bits out(rows, std::vector<int>(cols, 0));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      std::vector<double> col;
      for (std::size_t k = 0; k < rows; ++k) col.push_back(s[k][c]);
      const double rm = median(s[r]);
      const double cm = median(col);
      out[r][c] = s[r][c] > factor * rm && s[r][c] > factor * cm;
    }
  return out;
}

inline int at(const Bits& m, long r, long c) {
  if (r < 0 || c < 0 || r >= static_cast<long>(m.size()) || c >= static_cast<long>(m[0].size())) return 0;
  return m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
}

/// 4x4 all-ones element anchored at (1, 1): offsets -1..2.
inline Bits erode(const Bits& m) {
  Bits out = m;
  for (long r = 0; r < static_cast<long>(m.size()); ++r)
    for (long c = 0; c < static_cast<long>(m[0].size()); ++c) {
      int all = 1;
      for (long i = -1; i <= 2; ++i)
        for (long j = -1; j <= 2; ++j) all &= at(m, r + i, c + j);
      out[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = all;
    }
  return out;
}

inline Bits dilate(const Bits& m) {
  Bits out = m;
  for (long r = 0; r < static_cast<long>(m.size()); ++r)
    for (long c = 0; c < static_cast<long>(m[0].size()); ++c) {
      int any = 0;
      for (long i = -1; i <= 2; ++i)
        for (long j = -1; j <= 2; ++j) any |= at(m, r - i, c - j);
      out[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = any;
    }
  return out;
}

inline std::vector<int> column_or(const Bits& m) {
  std::vector<int> v(m[0].size(), 0);
  for (std::size_t c = 0; c < v.size(); ++c)
    for (std::size_t r = 0; r < m.size(); ++r)
      if (m[r][c]) v[c] = 1;
  return v;
}

inline std::vector<int> spread(std::vector<int> v, int times) {
  for (int t = 0; t < times; ++t) {
    std::vector<int> n(v.size(), 0);
    for (std::size_t i = 0; i < v.size(); ++i) {
      int left = i > 0 ? v[i - 1] : 0;
      int right = i + 1 < v.size() ? v[i + 1] : 0;
      n[i] = v[i] | left | right;
    }
    v = n;
  }
  return v;
}

inline std::vector<int> to_samples(const std::vector<int>& frames, std::size_t hop, std::size_t total) {
  std::vector<int> out;
  std::size_t frame = 0, within = 0;
  for (std::size_t i = 0; i < total; ++i) {
    out.push_back(frames[std::min(frame, frames.size() - 1)]);
    if (++within == hop) {
      within = 0;
      ++frame;
    }
  }
  return out;
}

struct Separation {
  std::vector<int> sound, noise;
  double threshold;
};

/// Sound/noise split written out step by step.
inline Separation separate(const Grid& s, std::size_t hop, std::size_t total, double sound_factor, double noise_factor,
                           double step, double floor_factor, std::size_t min_sound) {
  Separation out;
  auto noise_cols = column_or(dilate(erode(clip(s, noise_factor))));
  for (auto& v : noise_cols) v = v ? 0 : 1;
  auto noise = to_samples(noise_cols, hop, total);

  int k = 0;
  while (true) {
    double factor = sound_factor - k * step;
    if (factor < floor_factor) factor = floor_factor;
    auto frames = spread(column_or(dilate(erode(clip(s, factor)))), 2);
    out.sound = to_samples(frames, hop, total);
    out.threshold = factor;
    std::size_t count = 0;
    for (int v : out.sound) count += v;
    if (count >= min_sound) break;
    if (factor <= floor_factor) {
      for (auto& v : out.sound) v = 1;
      break;
    }
    ++k;
  }
  out.noise.resize(total);
  for (std::size_t i = 0; i < total; ++i) out.noise[i] = noise[i] && !out.sound[i];
  return out;
}

/// Direct DFT magnitude of one Hann-windowed frame.
inline std::vector<double> dft_magnitudes(const std::vector<double>& frame) {
  const std::size_t n = frame.size();
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * t / n);
      acc += frame[t] * w * std::polar(1.0, -2.0 * std::numbers::pi * double(k * t % n) / n);
    }
    out[k] = std::abs(acc);
  }
  return out;
}

inline std::map<std::string, std::set<int>> neighbors(const CorpusManifest& m) {
  std::map<std::string, std::set<int>> out;
  for (const auto& a : m.entries) {
    auto& set = out[a.recording_id];
    if (!a.metadata.latitude || !a.metadata.longitude) continue;
    for (const auto& b : m.entries) {
      if (!b.metadata.latitude || !b.metadata.longitude || b.species_id == a.species_id) continue;
      if (std::fabs(*a.metadata.latitude - *b.metadata.latitude) <= 1.0 &&
          std::fabs(*a.metadata.longitude - *b.metadata.longitude) <= 1.0)
        set.insert(b.species_id);
    }
  }
  return out;
}

/// Average precision computed from first principles: walk the full ranking and
/// accumulate precision at each relevant hit.
inline double average_precision(const std::vector<double>& probs, const std::set<int>& relevant) {
  std::vector<int> order(probs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  // selection sort: highest probability first, lower id first on ties
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const int a = order[i], b = order[j];
      if (probs[b] > probs[a] || (probs[b] == probs[a] && b < a)) std::swap(order[i], order[j]);
    }
  double sum = 0.0;
  int hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k)
    if (relevant.count(order[k])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  return sum / static_cast<double>(relevant.size());
}


/// Direct sliding-window cross-correlation, x[c][y][x], w[f][c][i][j], zero padding k/2.
inline std::vector<double> conv(const std::vector<double>& x, std::size_t ch, std::size_t h, std::size_t w,
                                const std::vector<double>& k, const std::vector<double>& b, std::size_t f,
                                std::size_t ks) {
  std::vector<double> y(f * h * w, 0.0);
  const int pad = static_cast<int>(ks / 2);
  for (std::size_t o = 0; o < f; ++o)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        double acc = b[o];
        for (std::size_t i = 0; i < ch; ++i)
          for (std::size_t a = 0; a < ks; ++a)
            for (std::size_t d = 0; d < ks; ++d) {
              const int rr = static_cast<int>(r + a) - pad, cc = static_cast<int>(c + d) - pad;
              if (rr < 0 || cc < 0 || rr >= static_cast<int>(h) || cc >= static_cast<int>(w)) continue;
              acc += k[((o * ch + i) * ks + a) * ks + d] * x[(i * h + rr) * w + cc];
            }
        y[(o * h + r) * w + c] = acc;
      }
  return y;
}

inline std::vector<double> pool(const std::vector<double>& x, std::size_t ch, std::size_t h, std::size_t w) {
  std::vector<double> y;
  for (std::size_t i = 0; i < ch; ++i)
    for (std::size_t r = 0; r + 1 < h; r += 2)
      for (std::size_t c = 0; c + 1 < w; c += 2)
        y.push_back(std::max({x[(i * h + r) * w + c], x[(i * h + r) * w + c + 1], x[(i * h + r + 1) * w + c],
                              x[(i * h + r + 1) * w + c + 1]}));
  return y;
}

}  // namespace birdsong::oracle
