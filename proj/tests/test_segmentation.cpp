#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "birdsong/segmentation.hpp"
#include "oracles.hpp"

using namespace birdsong;

namespace {

oracle::Grid to_grid(const RealMatrix& m) {
  oracle::Grid g(m.rows, std::vector<double>(m.cols));
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) g[r][c] = m(r, c);
  return g;
}

oracle::Bits to_bits(const BinaryMask& m) {
  oracle::Bits g(m.rows, std::vector<int>(m.cols));
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) g[r][c] = m(r, c);
  return g;
}

BinaryMask random_mask(RandomSource& rng, std::size_t rows, std::size_t cols, double p) {
  BinaryMask m(rows, cols);
  for (auto& v : m.data) v = rng.bernoulli(p);
  return m;
}

/// Sparse, heavy-tailed spectrogram-like values in [0, 1].
RealMatrix random_spectrogram(RandomSource& rng, std::size_t rows, std::size_t cols) {
  RealMatrix m(rows, cols);
  for (auto& v : m.data) v = std::pow(rng.uniform(0, 1), 4.0);
  // a few bright blobs so that the opening keeps something
  for (int b = 0; b < 3; ++b) {
    auto r0 = rng.index(rows - 6), c0 = rng.index(cols - 6);
    for (std::size_t r = r0; r < r0 + 6; ++r)
      for (std::size_t c = c0; c < c0 + 6; ++c) m(r, c) = rng.uniform(0.6, 1.0);
  }
  return normalize_unit(m);
}

}  // namespace

TEST(MedianClip, ConstantMatrixGivesEmptyMask) {
  RealMatrix m(8, 8, 0.7);
  for (auto v : median_clip_mask(m, 3.0).data) EXPECT_EQ(v, 0);
}

TEST(MedianClip, SinglePixelOverZeroMedian) {
  RealMatrix m(16, 16, 0.0);
  m(5, 9) = 1.0;
  auto mask = median_clip_mask(m, 3.0);
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(mask(r, c), (r == 5 && c == 9) ? 1 : 0);
}

TEST(MedianClip, MatchesNaiveOracle) {
  RandomSource rng(21);
  for (int t = 0; t < 5; ++t) {
    RealMatrix m(64, 64);
    for (auto& v : m.data) v = rng.uniform(0, 1) * rng.uniform(0, 1);
    for (double factor : {1.0, 2.5, 3.0}) EXPECT_EQ(to_bits(median_clip_mask(m, factor)), oracle::clip(to_grid(m), factor));
  }
  RealMatrix odd(5, 7);
  for (auto& v : odd.data) v = rng.uniform(0, 1);
  EXPECT_EQ(to_bits(median_clip_mask(odd, 1.2)), oracle::clip(to_grid(odd), 1.2));
}

TEST(MedianClip, LoweringFactorNeverShrinksMask) {
  RandomSource rng(4);
  for (int t = 0; t < 20; ++t) {
    auto s = random_spectrogram(rng, 32, 48);
    auto hi = median_clip_mask(s, 3.0), lo = median_clip_mask(s, 2.0);
    for (std::size_t i = 0; i < hi.data.size(); ++i) EXPECT_LE(hi.data[i], lo.data[i]);
  }
}

TEST(Morphology, SaturationAndIsolatedPixel) {
  BinaryMask ones(10, 12, 1);
  EXPECT_EQ(morph_binary(ones, MorphKind::Dilate), ones);
  EXPECT_EQ(morph_open(ones), ones);
  BinaryMask single(10, 12, 0);
  single(4, 4) = 1;
  for (auto v : morph_binary(single, MorphKind::Erode).data) EXPECT_EQ(v, 0);
  auto d = morph_binary(single, MorphKind::Dilate);
  // dilation places the element at p + offset: rows/cols 4-1 .. 4+2
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t c = 0; c < 12; ++c) EXPECT_EQ(d(r, c), (r >= 3 && r <= 6 && c >= 3 && c <= 6) ? 1 : 0);
}

TEST(Morphology, MatchesBruteForce) {
  RandomSource rng(8);
  for (int t = 0; t < 50; ++t) {
    auto m = random_mask(rng, 32, 32, rng.uniform(0.2, 0.9));
    EXPECT_EQ(to_bits(morph_binary(m, MorphKind::Erode)), oracle::erode(to_bits(m)));
    EXPECT_EQ(to_bits(morph_binary(m, MorphKind::Dilate)), oracle::dilate(to_bits(m)));
  }
  auto small = random_mask(rng, 3, 2, 0.8);
  EXPECT_EQ(to_bits(morph_binary(small, MorphKind::Dilate)), oracle::dilate(to_bits(small)));
}

TEST(Morphology, OpeningIsAntiExtensiveAndIdempotent) {
  RandomSource rng(9);
  for (int t = 0; t < 20; ++t) {
    auto m = random_mask(rng, 24, 40, 0.6);
    auto o = morph_open(m);
    for (std::size_t i = 0; i < m.data.size(); ++i) EXPECT_LE(o.data[i], m.data[i]);
    EXPECT_EQ(morph_open(o), o);
  }
}

TEST(FrameIndicator, ColumnOr) {
  BinaryMask zero(4, 6, 0);
  EXPECT_EQ(frame_indicator(zero), FrameIndicator(6, 0));
  zero(3, 2) = 1;
  EXPECT_EQ(frame_indicator(zero), (FrameIndicator{0, 0, 1, 0, 0, 0}));
  RandomSource rng(10);
  for (int t = 0; t < 20; ++t) {
    auto m = random_mask(rng, 16, 30, 0.05);
    auto v = frame_indicator(m);
    auto ref = oracle::column_or(to_bits(m));
    EXPECT_EQ(std::vector<int>(v.begin(), v.end()), ref);
  }
}

TEST(DilateIndicator, SpreadsTwoEachSide) {
  EXPECT_EQ(dilate_indicator({0, 0, 1, 0, 0}), (FrameIndicator{1, 1, 1, 1, 1}));
  EXPECT_EQ(dilate_indicator({0, 0, 0, 0}), (FrameIndicator{0, 0, 0, 0}));
  EXPECT_EQ(dilate_indicator({0, 0, 0, 0, 0, 0, 1}), (FrameIndicator{0, 0, 0, 0, 1, 1, 1}));
  RandomSource rng(12);
  for (int t = 0; t < 50; ++t) {
    FrameIndicator v(40);
    for (auto& x : v) x = rng.bernoulli(0.1);
    auto got = dilate_indicator(v, 2);
    EXPECT_EQ(std::vector<int>(got.begin(), got.end()), oracle::spread(std::vector<int>(v.begin(), v.end()), 2));
  }
}

TEST(SampleMask, IndexArithmetic) {
  EXPECT_EQ(indicator_to_sample_mask({1}, 133, 100), SampleMask(100, 1));
  auto m = indicator_to_sample_mask({1, 0}, 133, 266);
  for (std::size_t i = 0; i < 266; ++i) EXPECT_EQ(m[i], i < 133 ? 1 : 0);
  EXPECT_EQ(indicator_to_sample_mask({0, 0, 0}, 10, 25), SampleMask(25, 0));
  RandomSource rng(13);
  for (int t = 0; t < 20; ++t) {
    std::size_t hop = static_cast<std::size_t>(rng.integer(1, 200));
    std::size_t total = static_cast<std::size_t>(rng.integer(1, 5000));
    FrameIndicator v((total + hop - 1) / hop);
    for (auto& x : v) x = rng.bernoulli(0.5);
    auto got = indicator_to_sample_mask(v, hop, total);
    EXPECT_EQ(std::vector<int>(got.begin(), got.end()),
              oracle::to_samples(std::vector<int>(v.begin(), v.end()), hop, total));
  }
}

TEST(Separation, MatchesStraightLineReference) {
  RandomSource rng(14);
  for (int t = 0; t < 30; ++t) {
    auto s = random_spectrogram(rng, 48, 40);
    SegmentationConfig cfg;
    cfg.hop = 100;
    cfg.min_sound_samples = static_cast<std::size_t>(rng.integer(0, 4000));
    const std::size_t total = 40 * 100 - static_cast<std::size_t>(rng.integer(0, 99));
    auto got = separate_spectrogram(s, cfg.hop, total, cfg);
    auto ref = oracle::separate(to_grid(s), cfg.hop, total, 3.0, 2.5, 0.1, 1.0, cfg.min_sound_samples);
    EXPECT_EQ(std::vector<int>(got.sound_mask.begin(), got.sound_mask.end()), ref.sound);
    EXPECT_EQ(std::vector<int>(got.noise_mask.begin(), got.noise_mask.end()), ref.noise);
    EXPECT_EQ(got.sound_threshold_used, ref.threshold);
  }
}

TEST(Separation, ChirpBetweenSilences) {
  const double rate = 44100;
  Waveform w;
  w.sample_rate = rate;
  w.samples.assign(3 * 44100, 0.0);
  double phase = 0;
  for (std::size_t i = 44100; i < 2 * 44100; ++i) {
    double f = 3000.0 + 2000.0 * (i - 44100) / 44100.0;
    phase += 2 * std::numbers::pi * f / rate;
    w.samples[i] = 0.8 * std::sin(phase);
  }
  SegmentationConfig cfg;
  auto r = separate_recording(w, cfg);
  EXPECT_EQ(r.sound_threshold_used, 3.0);
  auto runs = mask_to_runs(r.sound_mask);
  ASSERT_EQ(runs.size(), 1u);
  // Frame c is centred on c * 133; the 512-sample window reaches 256 samples
  // either side, and two indicator dilations add two frames each side.
  const long slack = 256 + 3 * 133;
  EXPECT_LE(static_cast<long>(runs[0].first), 44100);
  EXPECT_GE(static_cast<long>(runs[0].first), 44100 - slack);
  EXPECT_GE(static_cast<long>(runs[0].second), 2 * 44100);
  EXPECT_LE(static_cast<long>(runs[0].second), 2 * 44100 + slack);
  // silent stretches away from the chirp are noise
  EXPECT_EQ(r.noise_mask[1000], 1);
  EXPECT_EQ(r.noise_mask[3 * 44100 - 1000], 1);
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_FALSE(r.sound_mask[i] && r.noise_mask[i]);
}

TEST(Separation, UniformNoiseLowersThreshold) {
  RandomSource rng(15);
  Waveform w;
  w.samples.resize(22050 * 3);
  for (auto& v : w.samples) v = rng.uniform(-0.5, 0.5);
  auto r = separate_recording(w);
  EXPECT_LT(r.sound_threshold_used, 3.0);
  EXPECT_TRUE(r.sound_count() >= 32768 || r.sound_threshold_used == 1.0);
}

TEST(Separation, SilenceFallsBackToWholeFile) {
  Waveform w{std::vector<double>(40000, 0.0), 22050};
  auto r = separate_recording(w);
  EXPECT_EQ(r.sound_threshold_used, 1.0);
  EXPECT_EQ(r.sound_count(), 40000u);
  EXPECT_EQ(r.noise_count(), 0u);
}

TEST(Separation, DeterministicAndConfigValidated) {
  RandomSource rng(16);
  Waveform w;
  w.samples.resize(50000);
  for (auto& v : w.samples) v = rng.uniform(-0.2, 0.2);
  EXPECT_EQ(separate_recording(w), separate_recording(w));
  SegmentationConfig bad;
  bad.noise_factor = 3.5;
  EXPECT_THROW(separate_recording(w, bad), ConfigError);
}

TEST(SegmentationDump, RoundTrip) {
  SegmentationResult r;
  r.sound_mask = {0, 1, 1, 0, 0, 1};
  r.noise_mask = {1, 0, 0, 1, 0, 0};
  r.sound_threshold_used = 2.9000000000000004;
  std::ostringstream out;
  write_segmentation(out, r);
  EXPECT_NE(out.str().find("sound: 1-3,5-6\n"), std::string::npos);
  EXPECT_NE(out.str().find("noise: 0-1,3-4\n"), std::string::npos);
  std::istringstream in(out.str());
  EXPECT_EQ(read_segmentation(in), r);
  std::istringstream bad("samples: 4\nthreshold: 3\nsound: 0-9\nnoise: \n");
  EXPECT_THROW(read_segmentation(bad), ParseError);
}
