#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "birdsong/common.hpp"
#include "birdsong/corpus.hpp"
#include "birdsong/wav.hpp"

namespace birdsong {

/// Toy corpus: each species sings a distinct tone pattern over a low-passed noise bed.
struct SynthConfig {
  int num_species = 3;
  int recordings_per_species = 20;
  double duration_s = 3.0;
  double sample_rate = 22050.0;
  double missing_prob = 0.15;  // per metadata field
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  CorpusManifest manifest;
  std::vector<Waveform> audio;
};

namespace detail {

/// Pattern families cycle with the species id; higher ids shift the pitch.
inline void add_song(std::vector<double>& x, int species, double rate, RandomSource& rng) {
  const double shift = 1.0 + 0.35 * (species / 3);
  const double jitter = rng.uniform(0.97, 1.03);
  const double amp = rng.uniform(0.35, 0.6);
  const std::size_t n = x.size();
  double t0 = rng.uniform(0.05, 0.3);
  auto put = [&](double start, double len, auto freq_at) {
    double phase = 0;
    const auto a = static_cast<std::size_t>(start * rate), b = std::min(n, static_cast<std::size_t>((start + len) * rate));
    for (std::size_t i = a; i < b; ++i) {
      const double u = static_cast<double>(i - a) / static_cast<double>(b - a);
      phase += 2 * std::numbers::pi * freq_at(u) * shift * jitter / rate;
      x[i] += amp * std::sin(std::numbers::pi * u) * std::sin(phase);
    }
  };
  const double end = static_cast<double>(n) / rate;
  switch (species % 3) {
    case 0:  // steady whistles
      for (; t0 + 0.25 < end; t0 += 0.45) put(t0, 0.25, [](double) { return 2000.0; });
      break;
    case 1:  // rising sweeps
      for (; t0 + 0.3 < end; t0 += 0.5) put(t0, 0.3, [](double u) { return 3000.0 + 3000.0 * u; });
      break;
    default:  // two-note trill
      for (int k = 0; t0 + 0.08 < end; t0 += 0.12, ++k)
        put(t0, 0.08, [k](double) { return k % 2 ? 4500.0 : 1200.0; });
      break;
  }
}

inline void add_noise_bed(std::vector<double>& x, RandomSource& rng) {
  const double level = rng.uniform(0.01, 0.04);
  double lp = 0;
  for (auto& v : x) {
    lp = 0.9 * lp + 0.1 * rng.normal(0, 1);
    v += level * 3.0 * lp;
  }
}

}  // namespace detail

inline SyntheticCorpus make_synthetic_corpus(const SynthConfig& cfg) {
  if (cfg.num_species < 1 || cfg.recordings_per_species < 1 || !(cfg.duration_s > 0))
    throw ConfigError("synthetic corpus needs positive species, recordings and duration");
  RandomSource rng(cfg.seed);
  SyntheticCorpus c;
  c.manifest.num_species = cfg.num_species;
  const auto n = static_cast<std::size_t>(cfg.duration_s * cfg.sample_rate);
  for (int r = 0; r < cfg.recordings_per_species; ++r)
    for (int s = 0; s < cfg.num_species; ++s) {
      Waveform w;
      w.sample_rate = cfg.sample_rate;
      w.samples.assign(n, 0.0);
      detail::add_noise_bed(w.samples, rng);
      detail::add_song(w.samples, s, cfg.sample_rate, rng);
      for (auto& v : w.samples) v = static_cast<float>(std::clamp(v, -1.0, 1.0));

      ManifestEntry e;
      char id[32];
      std::snprintf(id, sizeof(id), "syn%03d_s%d", r, s);
      e.recording_id = id;
      e.audio_path = e.recording_id + ".wav";
      e.species_id = s;
      auto& md = e.metadata;
      md.species_id = s;
      auto keep = [&] { return !rng.bernoulli(cfg.missing_prob); };
      if (keep()) {
        md.latitude = std::round((45.0 + 0.8 * s + rng.uniform(-0.5, 0.5)) * 1e4) / 1e4;
        md.longitude = std::round((8.0 + 0.8 * s + rng.uniform(-0.5, 0.5)) * 1e4) / 1e4;
      }
      if (keep()) md.elevation = std::round(200.0 + 400.0 * s + rng.uniform(0, 300));
      if (keep()) md.date = Date{2017, static_cast<int>(rng.integer(3, 8)), static_cast<int>(rng.integer(1, 28))};
      if (keep()) md.time_of_day = static_cast<double>(rng.integer(4 * 60 + 60 * s, 10 * 60 + 60 * s));
      c.manifest.entries.push_back(std::move(e));
      c.audio.push_back(std::move(w));
    }
  return c;
}

/// Writes `<id>.wav` files and `manifest.csv` into `dir`; returns the manifest path.
inline std::filesystem::path write_synthetic_corpus(const SyntheticCorpus& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < c.audio.size(); ++i)
    write_wav(dir / c.manifest.entries[i].audio_path, c.audio[i], WavEncoding::Float32);
  const auto path = dir / "manifest.csv";
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_manifest(out, c.manifest);
  return path;
}

}  // namespace birdsong
