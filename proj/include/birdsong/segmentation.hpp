#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "birdsong/common.hpp"
#include "birdsong/dsp.hpp"
#include "birdsong/text.hpp"

namespace birdsong {

using BinaryMask = Matrix<std::uint8_t>;
using FrameIndicator = std::vector<std::uint8_t>;
using SampleMask = std::vector<std::uint8_t>;

enum class MorphKind { Erode, Dilate };

struct SegmentationConfig {
  double sound_factor = 3.0;
  double noise_factor = 2.5;
  std::size_t struct_size = 4;
  std::size_t indicator_dilations = 2;
  double threshold_step = 0.1;
  double min_factor = 1.0;
  std::size_t min_sound_samples = 32768;
  std::size_t window_size = 512;
  std::size_t hop = 133;  // round(0.26 * 512): 74% overlap

  void validate() const {
    if (!(noise_factor > 0.0 && sound_factor > noise_factor))
      throw ConfigError("segmentation: require sound_factor > noise_factor > 0");
    if (struct_size == 0) throw ConfigError("segmentation: struct_size must be positive");
    if (!(threshold_step > 0.0)) throw ConfigError("segmentation: threshold_step must be positive");
    if (!(min_factor > 0.0) || min_factor > sound_factor)
      throw ConfigError("segmentation: min_factor must lie in (0, sound_factor]");
    if (hop == 0 || hop > window_size) throw ConfigError("segmentation: hop must lie in (0, window_size]");
  }
};

struct SegmentationResult {
  SampleMask sound_mask;
  SampleMask noise_mask;
  double sound_threshold_used = 0.0;

  std::size_t size() const noexcept { return sound_mask.size(); }
  std::size_t sound_count() const { return static_cast<std::size_t>(std::count(sound_mask.begin(), sound_mask.end(), 1)); }
  std::size_t noise_count() const { return static_cast<std::size_t>(std::count(noise_mask.begin(), noise_mask.end(), 1)); }
  bool is_irrelevant(std::size_t i) const { return sound_mask[i] == 0 && noise_mask[i] == 0; }

  bool operator==(const SegmentationResult&) const = default;
};

namespace detail {

inline double median_of(std::vector<double>& v) {
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
  const double upper = v[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<long>(mid));
  return (lower + upper) / 2.0;
}

}  // namespace detail

struct RowColumnMedians {
  std::vector<double> row;
  std::vector<double> col;
};

/// Per-row and per-column medians (mean of the two central values for even counts).
inline RowColumnMedians row_column_medians(const RealMatrix& s) {
  RowColumnMedians m{std::vector<double>(s.rows), std::vector<double>(s.cols)};
  std::vector<double> buf(s.cols);
  for (std::size_t r = 0; r < s.rows; ++r) {
    std::copy_n(s.data.begin() + static_cast<long>(r * s.cols), s.cols, buf.begin());
    m.row[r] = detail::median_of(buf);
  }
  buf.resize(s.rows);
  for (std::size_t c = 0; c < s.cols; ++c) {
    for (std::size_t r = 0; r < s.rows; ++r) buf[r] = s(r, c);
    m.col[c] = detail::median_of(buf);
  }
  return m;
}

inline BinaryMask median_clip_mask(const RealMatrix& s, const RowColumnMedians& med, double factor) {
  BinaryMask out(s.rows, s.cols, 0);
  for (std::size_t r = 0; r < s.rows; ++r) {
    const double row_limit = factor * med.row[r];
    for (std::size_t c = 0; c < s.cols; ++c) {
      const double v = s(r, c);
      out(r, c) = (v > row_limit && v > factor * med.col[c]) ? 1 : 0;
    }
  }
  return out;
}

/// Pixel is 1 iff it exceeds `factor` times both its row median and its column median.
inline BinaryMask median_clip_mask(const RealMatrix& s, double factor) {
  return median_clip_mask(s, row_column_medians(s), factor);
}

/// Binary erosion/dilation with an all-ones size x size element anchored at
/// ((size-1)/2, (size-1)/2). Pixels outside the mask count as 0.
inline BinaryMask morph_binary(const BinaryMask& m, MorphKind kind, std::size_t size = 4) {
  const long anchor = static_cast<long>((size - 1) / 2);
  const long rows = static_cast<long>(m.rows), cols = static_cast<long>(m.cols);
  const long n = static_cast<long>(size);
  // Erosion reads p + (k - anchor); dilation reads p - (k - anchor).
  const long lo = kind == MorphKind::Erode ? -anchor : anchor - (n - 1);
  const long hi = lo + n - 1;
  const bool erode = kind == MorphKind::Erode;

  BinaryMask tmp(m.rows, m.cols, 0);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) {
      bool acc = erode;
      for (long d = lo; d <= hi; ++d) {
        const long cc = c + d;
        const bool v = cc >= 0 && cc < cols && m(static_cast<std::size_t>(r), static_cast<std::size_t>(cc));
        if (erode ? !v : v) {
          acc = !erode;
          break;
        }
      }
      tmp(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = acc;
    }
  BinaryMask out(m.rows, m.cols, 0);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) {
      bool acc = erode;
      for (long d = lo; d <= hi; ++d) {
        const long rr = r + d;
        const bool v = rr >= 0 && rr < rows && tmp(static_cast<std::size_t>(rr), static_cast<std::size_t>(c));
        if (erode ? !v : v) {
          acc = !erode;
          break;
        }
      }
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = acc;
    }
  return out;
}

/// Erosion followed by dilation.
inline BinaryMask morph_open(const BinaryMask& m, std::size_t size = 4) {
  return morph_binary(morph_binary(m, MorphKind::Erode, size), MorphKind::Dilate, size);
}

inline FrameIndicator frame_indicator(const BinaryMask& m) {
  FrameIndicator v(m.cols, 0);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) v[c] |= m(r, c);
  return v;
}

/// `times` passes of 1-D dilation with the element [1, 1, 1].
inline FrameIndicator dilate_indicator(FrameIndicator v, std::size_t times = 2) {
  for (std::size_t t = 0; t < times; ++t) {
    FrameIndicator next(v.size(), 0);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i]) continue;
      next[i] = 1;
      if (i > 0) next[i - 1] = 1;
      if (i + 1 < v.size()) next[i + 1] = 1;
    }
    v = std::move(next);
  }
  return v;
}

/// Sample i takes the value of frame min(i / hop, frames - 1).
inline SampleMask indicator_to_sample_mask(const FrameIndicator& v, std::size_t hop, std::size_t total_samples) {
  SampleMask out(total_samples, 0);
  if (v.empty()) return out;
  for (std::size_t i = 0; i < total_samples; ++i) out[i] = v[std::min(i / hop, v.size() - 1)];
  return out;
}

/// Sound/noise split of an already normalized spectrogram whose frames are `hop`
/// samples apart. Sound columns come from the opened sound-factor clip mask,
/// dilated along time; noise columns are those where the opened noise-factor
/// clip mask is empty. The sound factor is lowered in `threshold_step` steps
/// until at least `min_sound_samples` are sound; if that never happens by
/// `min_factor`, the whole recording is sound.
inline SegmentationResult separate_spectrogram(const RealMatrix& normalized, std::size_t hop, std::size_t total_samples,
                                               const SegmentationConfig& cfg) {
  cfg.validate();
  const auto med = row_column_medians(normalized);

  const auto noise_open = morph_open(median_clip_mask(normalized, med, cfg.noise_factor), cfg.struct_size);
  FrameIndicator noise_frames = frame_indicator(noise_open);
  for (auto& v : noise_frames) v = !v;
  const SampleMask noise_samples = indicator_to_sample_mask(noise_frames, hop, total_samples);

  SegmentationResult result;
  for (std::size_t step = 0;; ++step) {
    const double factor = std::max(cfg.min_factor, cfg.sound_factor - static_cast<double>(step) * cfg.threshold_step);
    const auto opened = morph_open(median_clip_mask(normalized, med, factor), cfg.struct_size);
    const auto frames = dilate_indicator(frame_indicator(opened), cfg.indicator_dilations);
    result.sound_mask = indicator_to_sample_mask(frames, hop, total_samples);
    result.sound_threshold_used = factor;
    if (result.sound_count() >= cfg.min_sound_samples) break;
    if (factor <= cfg.min_factor) {
      std::fill(result.sound_mask.begin(), result.sound_mask.end(), 1);
      break;
    }
  }
  result.noise_mask.resize(total_samples);
  for (std::size_t i = 0; i < total_samples; ++i)
    result.noise_mask[i] = noise_samples[i] && !result.sound_mask[i];
  return result;
}

inline SegmentationResult separate_recording(const Waveform& w, const SegmentationConfig& cfg = {}) {
  cfg.validate();
  const auto spec = stft(w, cfg.window_size, cfg.hop);
  return separate_spectrogram(normalize_unit(spec.values), cfg.hop, w.size(), cfg);
}

/// Samples of `w` where `mask` is set, concatenated in order.
inline std::vector<double> masked_samples(std::span<const double> w, const SampleMask& mask) {
  std::vector<double> out;
  for (std::size_t i = 0; i < std::min(w.size(), mask.size()); ++i)
    if (mask[i]) out.push_back(w[i]);
  return out;
}

using SampleRuns = std::vector<std::pair<std::size_t, std::size_t>>;

/// Half-open [start, end) runs of ones.
inline SampleRuns mask_to_runs(const SampleMask& m) {
  SampleRuns runs;
  for (std::size_t i = 0; i < m.size();) {
    if (!m[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < m.size() && m[j]) ++j;
    runs.emplace_back(i, j);
    i = j;
  }
  return runs;
}

inline SampleMask runs_to_mask(const SampleRuns& runs, std::size_t total) {
  SampleMask m(total, 0);
  for (auto [a, b] : runs) {
    if (a > b || b > total) throw ParseError("mask run " + std::to_string(a) + "-" + std::to_string(b) + " out of range");
    std::fill(m.begin() + static_cast<long>(a), m.begin() + static_cast<long>(b), 1);
  }
  return m;
}

inline std::string format_runs(const SampleRuns& runs) {
  std::string s;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(runs[i].first) + '-' + std::to_string(runs[i].second);
  }
  return s;
}

inline SampleRuns parse_runs(std::string_view s, std::size_t line = 0) {
  SampleRuns runs;
  if (text::trim(s).empty()) return runs;
  for (auto item : text::split(s, ',')) {
    auto dash = item.find('-');
    if (dash == std::string_view::npos) throw ParseError("invalid run '" + std::string(item) + "'", line);
    runs.emplace_back(text::require_number<std::size_t>(item.substr(0, dash), "run start", line),
                      text::require_number<std::size_t>(item.substr(dash + 1), "run end", line));
  }
  return runs;
}

/// Text dump: `samples:`, `threshold:`, then `sound:` and `noise:` run lists.
inline void write_segmentation(std::ostream& out, const SegmentationResult& r) {
  out << "samples: " << r.size() << '\n';
  out << "threshold: " << text::format_real(r.sound_threshold_used) << '\n';
  out << "sound: " << format_runs(mask_to_runs(r.sound_mask)) << '\n';
  out << "noise: " << format_runs(mask_to_runs(r.noise_mask)) << '\n';
}

inline SegmentationResult read_segmentation(std::istream& in) {
  std::string line;
  std::size_t lineno = 0, samples = 0;
  bool have_samples = false, have_threshold = false;
  SampleRuns sound, noise;
  bool have_sound = false, have_noise = false;
  SegmentationResult r;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    auto colon = line.find(':');
    if (colon == std::string::npos) throw ParseError("expected 'key: value'", lineno);
    auto key = text::trim(std::string_view(line).substr(0, colon));
    auto value = text::trim(std::string_view(line).substr(colon + 1));
    if (key == "samples") {
      samples = text::require_number<std::size_t>(value, "samples", lineno);
      have_samples = true;
    } else if (key == "threshold") {
      r.sound_threshold_used = text::require_number<double>(value, "threshold", lineno);
      have_threshold = true;
    } else if (key == "sound") {
      sound = parse_runs(value, lineno);
      have_sound = true;
    } else if (key == "noise") {
      noise = parse_runs(value, lineno);
      have_noise = true;
    } else {
      throw ParseError("unknown key '" + std::string(key) + "'", lineno);
    }
  }
  if (!have_samples || !have_threshold || !have_sound || !have_noise)
    throw ParseError("incomplete segmentation record");
  r.sound_mask = runs_to_mask(sound, samples);
  r.noise_mask = runs_to_mask(noise, samples);
  return r;
}

}  // namespace birdsong
