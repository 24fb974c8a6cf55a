#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "birdsong/common.hpp"
#include "birdsong/corpus.hpp"

namespace birdsong {

class AudioFormatError : public Error {
 public:
  using Error::Error;
};

enum class WavEncoding { Pcm16, Float32 };

struct WavData {
  std::vector<std::vector<double>> channels;
  double sample_rate = 0.0;
};

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

}  // namespace detail

/// Parses a RIFF/WAVE image holding 16-bit PCM or 32-bit IEEE float samples.
inline WavData parse_wav(std::span<const unsigned char> bytes) {
  using detail::read_u16;
  using detail::read_u32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw AudioFormatError("corrupt WAV header: missing RIFF/WAVE tag");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::uint32_t size = read_u32(chunk + 4);
    std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) throw AudioFormatError("corrupt WAV header: short fmt chunk");
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      if (format == 0xFFFE) {
        if (size < 26) throw AudioFormatError("corrupt WAV header: short extensible fmt chunk");
        format = read_u16(bytes.data() + body + 24);
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = std::min<std::size_t>(size, bytes.size() - std::min(body, bytes.size()));
      if (body > bytes.size()) throw AudioFormatError("corrupt WAV header: data chunk past end of file");
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (channels == 0 || rate == 0) throw AudioFormatError("corrupt WAV header: missing or invalid fmt chunk");
  if (data == nullptr) throw AudioFormatError("corrupt WAV header: missing data chunk");

  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32)
    throw AudioFormatError("unsupported codec: format " + std::to_string(format) + ", " + std::to_string(bits) +
                           " bits");
  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t frames = data_size / frame_bytes;
  if (frames == 0) throw AudioFormatError("corrupt WAV: no samples");

  WavData out;
  out.sample_rate = rate;
  out.channels.assign(channels, std::vector<double>(frames));
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + f * frame_bytes + c * (bits / 8);
      double v;
      if (pcm16) {
        v = static_cast<std::int16_t>(read_u16(p)) / 32768.0;
      } else {
        float x;
        std::uint32_t raw = read_u32(p);
        std::memcpy(&x, &raw, sizeof(x));
        v = std::isfinite(x) ? std::clamp(static_cast<double>(x), -1.0, 1.0) : 0.0;
      }
      out.channels[c][f] = v;
    }
  }
  return out;
}

inline std::vector<unsigned char> encode_wav(std::span<const std::vector<double>> channels, std::uint32_t sample_rate,
                                             WavEncoding encoding = WavEncoding::Pcm16) {
  if (channels.empty()) throw ValidationError("encode_wav: no channels");
  const std::size_t frames = channels.front().size();
  const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : 32;
  const std::uint16_t nch = static_cast<std::uint16_t>(channels.size());
  const std::uint32_t data_size = static_cast<std::uint32_t>(frames * nch * (bits / 8));
  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  auto tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };
  tag("RIFF");
  detail::put_u32(out, 36 + data_size);
  tag("WAVE");
  tag("fmt ");
  detail::put_u32(out, 16);
  detail::put_u16(out, encoding == WavEncoding::Pcm16 ? 1 : 3);
  detail::put_u16(out, nch);
  detail::put_u32(out, sample_rate);
  detail::put_u32(out, sample_rate * nch * (bits / 8));
  detail::put_u16(out, static_cast<std::uint16_t>(nch * (bits / 8)));
  detail::put_u16(out, bits);
  tag("data");
  detail::put_u32(out, data_size);
  for (std::size_t f = 0; f < frames; ++f) {
    for (const auto& ch : channels) {
      double v = std::clamp(ch[f], -1.0, 1.0);
      if (encoding == WavEncoding::Pcm16) {
        auto q = static_cast<std::int16_t>(std::clamp(std::lround(v * 32768.0), -32768L, 32767L));
        detail::put_u16(out, static_cast<std::uint16_t>(q));
      } else {
        float x = static_cast<float>(v);
        std::uint32_t raw;
        std::memcpy(&raw, &x, sizeof(raw));
        detail::put_u32(out, raw);
      }
    }
  }
  return out;
}

inline void write_wav(const std::filesystem::path& path, const Waveform& w, WavEncoding encoding = WavEncoding::Pcm16) {
  std::vector<std::vector<double>> ch{w.samples};
  auto bytes = encode_wav(ch, static_cast<std::uint32_t>(std::lround(w.sample_rate)), encoding);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

namespace detail {

inline double bessel_i0(double x) {
  double sum = 1.0, term = 1.0, q = x * x / 4.0;
  for (int k = 1; k < 64 && term > 1e-17 * sum; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
  }
  return sum;
}

}  // namespace detail

/// Band-limited resampling with a Kaiser-windowed sinc kernel (beta 8.6,
/// 32 zero crossings per side). Output length is round(n * to / from).
inline std::vector<double> resample(std::span<const double> x, double from_rate, double to_rate) {
  if (from_rate == to_rate) return {x.begin(), x.end()};
  constexpr double kZeroCrossings = 32.0;
  constexpr double kBeta = 8.6;
  const double ratio = to_rate / from_rate;
  const double cutoff = std::min(1.0, ratio) * 0.97;
  const double half_width = kZeroCrossings / cutoff;
  const double i0_beta = detail::bessel_i0(kBeta);
  const auto n_out = static_cast<std::size_t>(std::llround(static_cast<double>(x.size()) * ratio));
  std::vector<double> y(std::max<std::size_t>(n_out, 1));
  const auto n_in = static_cast<long>(x.size());
  for (std::size_t n = 0; n < y.size(); ++n) {
    const double t = static_cast<double>(n) / ratio;
    const long lo = std::max(0L, static_cast<long>(std::ceil(t - half_width)));
    const long hi = std::min(n_in - 1, static_cast<long>(std::floor(t + half_width)));
    double acc = 0.0;
    for (long k = lo; k <= hi; ++k) {
      const double d = t - static_cast<double>(k);
      const double u = d / half_width;
      const double win = detail::bessel_i0(kBeta * std::sqrt(std::max(0.0, 1.0 - u * u))) / i0_beta;
      const double arg = std::numbers::pi * cutoff * d;
      const double sinc = d == 0.0 ? 1.0 : std::sin(arg) / arg;
      acc += x[static_cast<std::size_t>(k)] * cutoff * sinc * win;
    }
    y[n] = std::clamp(acc, -1.0, 1.0);
  }
  return y;
}

/// Decodes a WAV image to a mono waveform at `target_rate`. Channels are averaged.
inline Waveform decode_audio(std::span<const unsigned char> bytes, double target_rate) {
  if (!(target_rate > 0.0)) throw ValidationError("target sample rate must be positive");
  WavData wav = parse_wav(bytes);
  std::vector<double> mono;
  if (wav.channels.size() == 1) {
    mono = std::move(wav.channels.front());
  } else {
    mono.assign(wav.channels.front().size(), 0.0);
    for (const auto& ch : wav.channels)
      for (std::size_t i = 0; i < mono.size(); ++i) mono[i] += ch[i];
    const double n = static_cast<double>(wav.channels.size());
    for (auto& v : mono) v /= n;
  }
  Waveform w;
  w.sample_rate = target_rate;
  w.samples = wav.sample_rate == target_rate ? std::move(mono) : resample(mono, wav.sample_rate, target_rate);
  return w;
}

inline Waveform decode_audio(const std::filesystem::path& path, double target_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open audio '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_audio(std::span<const unsigned char>(bytes), target_rate);
}

}  // namespace birdsong
