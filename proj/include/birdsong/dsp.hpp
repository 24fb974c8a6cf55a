#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

#include "birdsong/common.hpp"
#include "birdsong/corpus.hpp"

namespace birdsong {

/// Magnitude spectrogram, rows = window_size / 2 + 1 frequency bins, cols = frames.
struct Spectrogram {
  RealMatrix values;
  double sample_rate = 0.0;
  std::size_t window_size = 0;
  std::size_t hop = 0;
};

inline constexpr std::size_t kMelBands = 80;

struct MelSpectrogram {
  RealMatrix values;  // kMelBands x frames, in [0, 1]
  std::vector<double> band_corners;  // kMelBands + 2 filter corner frequencies (Hz)
};

/// Real-input FFT backed by FFTW. One instance per thread.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    out_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const noexcept { return n_; }
  double* input() noexcept { return in_; }

  /// Transforms the current input buffer and writes |X[k]| for k = 0..n/2.
  void magnitudes(double* dst) {
    fftw_execute(plan_);
    for (std::size_t k = 0; k <= n_ / 2; ++k) dst[k] = std::hypot(out_[k][0], out_[k][1]);
  }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }
  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

/// Periodic Hann window of length n.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

/// Maps any integer index into [0, n) by mirror reflection without repeating the edge sample.
inline std::size_t reflect_index(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * (static_cast<long>(n) - 1);
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - m);
}

inline std::size_t stft_frame_count(std::size_t length, std::size_t hop) { return (length + hop - 1) / hop; }

/// Short-time Fourier magnitudes with a periodic Hann window. Frame f is centred
/// on sample f * hop with reflection padding, giving ceil(len / hop) frames.
inline Spectrogram stft(std::span<const double> samples, double sample_rate, std::size_t window_size, std::size_t hop) {
  if (samples.empty()) throw ValidationError("stft: waveform must contain at least one sample");
  if (window_size < 2 || (window_size & (window_size - 1)) != 0)
    throw ValidationError("stft: window size must be a power of two");
  if (hop == 0 || hop > window_size) throw ValidationError("stft: hop must lie in (0, window_size]");

  const std::size_t bins = window_size / 2 + 1;
  const std::size_t frames = stft_frame_count(samples.size(), hop);
  const auto window = hann_window(window_size);
  RealFft fft(window_size);
  Spectrogram s{RealMatrix(bins, frames), sample_rate, window_size, hop};
  std::vector<double> mags(bins);
  const long half = static_cast<long>(window_size / 2);
  for (std::size_t f = 0; f < frames; ++f) {
    const long start = static_cast<long>(f * hop) - half;
    double* buf = fft.input();
    for (std::size_t i = 0; i < window_size; ++i) {
      const long idx = start + static_cast<long>(i);
      const double x = (idx >= 0 && idx < static_cast<long>(samples.size()))
                           ? samples[static_cast<std::size_t>(idx)]
                           : samples[reflect_index(idx, samples.size())];
      buf[i] = x * window[i];
    }
    fft.magnitudes(mags.data());
    for (std::size_t k = 0; k < bins; ++k) s.values(k, f) = mags[k];
  }
  return s;
}

inline Spectrogram stft(const Waveform& w, std::size_t window_size, std::size_t hop) {
  return stft(w.samples, w.sample_rate, window_size, hop);
}

/// Min-max scaling to [0, 1]; a constant matrix maps to all zeros.
inline RealMatrix normalize_unit(RealMatrix m) {
  if (m.data.empty()) return m;
  auto [lo_it, hi_it] = std::minmax_element(m.data.begin(), m.data.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) {
    std::fill(m.data.begin(), m.data.end(), 0.0);
    return m;
  }
  const double scale = 1.0 / (hi - lo);
  for (auto& v : m.data) v = std::clamp((v - lo) * scale, 0.0, 1.0);
  return m;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Corner frequencies of `num_bands` triangular filters: num_bands + 2 points
/// uniformly spaced in mel between 0 Hz and Nyquist.
inline std::vector<double> mel_band_corners(std::size_t num_bands, double sample_rate) {
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> corners(num_bands + 2);
  for (std::size_t i = 0; i < corners.size(); ++i)
    corners[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(num_bands + 1));
  return corners;
}

/// Triangular mel filterbank, num_bands x (window_size / 2 + 1). Filter m rises
/// from corner m to corner m+1 and falls to corner m+2. Peak weight 1.
inline RealMatrix mel_filterbank(std::size_t num_bands, std::size_t window_size, double sample_rate) {
  if (num_bands == 0) throw ValidationError("mel_filterbank: need at least one band");
  const std::size_t bins = window_size / 2 + 1;
  const auto corners = mel_band_corners(num_bands, sample_rate);
  RealMatrix fb(num_bands, bins, 0.0);
  for (std::size_t m = 0; m < num_bands; ++m) {
    const double lo = corners[m], mid = corners[m + 1], hi = corners[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(window_size);
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      fb(m, k) = w;
    }
  }
  return fb;
}

/// normalize_unit(log(1 + filterbank * magnitudes)), kMelBands rows.
inline MelSpectrogram mel_spectrogram(const Spectrogram& s) {
  const auto fb = mel_filterbank(kMelBands, s.window_size, s.sample_rate);
  const std::size_t bins = s.values.rows, frames = s.values.cols;
  if (fb.cols != bins) throw ValidationError("mel_spectrogram: bin count does not match window size");
  RealMatrix out(kMelBands, frames, 0.0);
  for (std::size_t m = 0; m < kMelBands; ++m) {
    const double* w = &fb.data[m * bins];
    double* dst = &out.data[m * frames];
    for (std::size_t k = 0; k < bins; ++k) {
      if (w[k] == 0.0) continue;
      const double* src = &s.values.data[k * frames];
      for (std::size_t f = 0; f < frames; ++f) dst[f] += w[k] * src[f];
    }
  }
  for (auto& v : out.data) v = std::log1p(v);
  return {normalize_unit(std::move(out)), mel_band_corners(kMelBands, s.sample_rate)};
}

/// Network input features of one segment: STFT with hop = window / 4, then
/// the log-normalized mel projection. 32768 samples at window 256 and 65536
/// samples at window 512 both give 80 x 512.
inline MelSpectrogram segment_features(std::span<const double> segment, double sample_rate, std::size_t fft_window) {
  return mel_spectrogram(stft(segment, sample_rate, fft_window, fft_window / 4));
}

}  // namespace birdsong
