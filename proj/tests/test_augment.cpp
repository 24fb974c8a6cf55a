#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>

#include "birdsong/augment.hpp"

using namespace birdsong;

namespace {

std::vector<double> tone(std::size_t n, double amp = 0.3) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(0.05 * static_cast<double>(i));
  return x;
}

/// Chi-square statistic of samples in [lo, hi] against a uniform 10-bin histogram.
double chi_square_uniform(const std::vector<double>& xs, double lo, double hi) {
  std::vector<double> bins(10, 0.0);
  for (double x : xs) bins[std::min<std::size_t>(9, static_cast<std::size_t>((x - lo) / (hi - lo) * 10))] += 1;
  const double expected = static_cast<double>(xs.size()) / 10.0;
  double chi = 0;
  for (double b : bins) chi += (b - expected) * (b - expected) / expected;
  return chi;
}

constexpr double kChiSquare9Dof1Percent = 21.666;

}  // namespace

TEST(ExtractSegment, LoopsShortSignals) {
  std::vector<double> sig(10000);
  for (std::size_t i = 0; i < sig.size(); ++i) sig[i] = static_cast<double>(i);
  RandomSource rng(1);
  auto seg = extract_segment(sig, 32768, rng);
  ASSERT_EQ(seg.size(), 32768u);
  // consecutive samples follow the looped signal
  for (std::size_t i = 1; i < seg.size(); ++i) EXPECT_EQ(seg[i], std::fmod(seg[i - 1] + 1, 10000.0));
  std::vector<double> exact(32768, 0.25);
  EXPECT_EQ(extract_segment(exact, 32768, rng), exact);
}

TEST(OverlayNoise, ZeroProbabilityIsIdentity) {
  auto cfg = AugmentConfig{};
  cfg.noise_overlay_prob = 0;
  auto seg = tone(1000);
  auto noise = tone(1000, 0.5);
  RandomSource rng(2);
  EXPECT_EQ(overlay_noise(seg, {noise}, cfg, rng), seg);
}

TEST(OverlayNoise, EmptyPoolFlagsAndReturnsInput) {
  auto seg = tone(100);
  RandomSource rng(3);
  AugmentTrace trace;
  EXPECT_EQ(overlay_noise(seg, {}, AugmentConfig{}, rng, &trace), seg);
  EXPECT_TRUE(trace.noise_pool_empty);
}

TEST(OverlayNoise, LinearSuperposition) {
  AugmentConfig cfg;
  cfg.noise_overlays_max = 1;
  cfg.noise_overlay_prob = 1;
  cfg.noise_volume_jitter = 0;
  auto seg = tone(1000, 0.3);
  RandomSource rng(4);
  auto out = overlay_noise(seg, {seg}, cfg, rng);
  for (std::size_t i = 0; i < seg.size(); ++i) EXPECT_DOUBLE_EQ(out[i], 2 * seg[i]);
}

TEST(OverlayNoise, MeanOverlayCountIsThree) {
  AugmentConfig cfg;
  auto seg = tone(64);
  auto noise = tone(64, 0.01);
  RandomSource rng(5);
  double total = 0;
  std::vector<double> factors;
  for (int i = 0; i < 10000; ++i) {
    AugmentTrace t;
    auto out = overlay_noise(seg, {noise}, cfg, rng, &t);
    total += t.noise_overlays;
    factors.insert(factors.end(), t.noise_factors.begin(), t.noise_factors.end());
    for (double v : out) ASSERT_LE(std::abs(v), 1.0);
  }
  EXPECT_NEAR(total / 10000, 3.0, 0.1);
  for (double f : factors) {
    EXPECT_GE(f, 0.9);
    EXPECT_LE(f, 1.1);
  }
  EXPECT_LT(chi_square_uniform(factors, 0.9, 1.1), kChiSquare9Dof1Percent);
}

TEST(CombineSameClass, IdentityLinearityAndRate) {
  AugmentConfig off;
  off.same_class_prob = 0;
  auto seg = tone(256, 0.4);
  RandomSource rng(6);
  EXPECT_EQ(combine_same_class(seg, {seg}, off, rng), seg);
  EXPECT_EQ(combine_same_class(seg, {}, AugmentConfig{}, rng), seg);

  AugmentConfig pinned;
  pinned.same_class_prob = 1;
  pinned.same_class_damp_lo = pinned.same_class_damp_hi = 0.5;
  auto out = combine_same_class(seg, {seg}, pinned, rng);
  for (std::size_t i = 0; i < seg.size(); ++i) EXPECT_DOUBLE_EQ(out[i], 1.5 * seg[i]);

  int applied = 0;
  std::vector<double> damps;
  for (int i = 0; i < 10000; ++i) {
    AugmentTrace t;
    combine_same_class(seg, {seg}, AugmentConfig{}, rng, &t);
    if (t.same_class_applied) {
      ++applied;
      damps.push_back(t.same_class_damping);
    }
  }
  EXPECT_NEAR(applied / 10000.0, 0.70, 0.02);
  for (double d : damps) {
    EXPECT_GE(d, 0.2);
    EXPECT_LE(d, 0.6);
  }
  EXPECT_LT(chi_square_uniform(damps, 0.2, 0.6), kChiSquare9Dof1Percent);
}

TEST(NeighborOverlay, IdentityLinearityAndRate) {
  auto seg = tone(256, 0.5);
  RandomSource rng(7);
  EXPECT_EQ(overlay_neighbor_species(seg, {}, AugmentConfig{}, rng), seg);
  AugmentConfig pinned;
  pinned.neighbor_prob = 1;
  pinned.neighbor_damp_jitter = 0;
  auto out = overlay_neighbor_species(seg, {seg}, pinned, rng);
  for (std::size_t i = 0; i < seg.size(); ++i) EXPECT_DOUBLE_EQ(out[i], 1.3 * seg[i]);
  int applied = 0;
  for (int i = 0; i < 10000; ++i) {
    AugmentTrace t;
    overlay_neighbor_species(seg, {seg}, AugmentConfig{}, rng, &t);
    if (t.neighbor_applied) {
      ++applied;
      EXPECT_GE(t.neighbor_damping, 0.25);
      EXPECT_LE(t.neighbor_damping, 0.35);
    }
  }
  EXPECT_NEAR(applied / 10000.0, 0.30, 0.02);
}

TEST(VolumeShift, PinnedAndRange) {
  AugmentConfig cfg;
  cfg.volume_jitter = 0;
  auto seg = tone(100, 0.5);
  RandomSource rng(8);
  EXPECT_EQ(volume_shift(seg, cfg, rng), seg);
  std::vector<double> half{0.5, -0.5};
  AugmentTrace t;
  auto out = volume_shift(half, AugmentConfig{}, rng, &t);
  EXPECT_DOUBLE_EQ(out[0], 0.5 * t.volume_factor);
  std::vector<double> factors;
  for (int i = 0; i < 10000; ++i) {
    volume_shift(half, AugmentConfig{}, rng, &t);
    factors.push_back(t.volume_factor);
    ASSERT_GE(t.volume_factor, 0.95);
    ASSERT_LE(t.volume_factor, 1.05);
  }
  EXPECT_LT(chi_square_uniform(factors, 0.95, 1.05), kChiSquare9Dof1Percent);
  std::vector<double> loud{0.99};
  AugmentConfig up;
  up.volume_jitter = 0.05;
  for (int i = 0; i < 100; ++i) EXPECT_LE(volume_shift(loud, up, rng)[0], 1.0);
}

TEST(VolumeShift, FactorAppliedToSine) {
  // 1.05 on a 0.5-amplitude sine gives 0.525
  auto seg = tone(2000, 0.5);
  for (auto& v : seg) v *= 1.05;
  EXPECT_NEAR(*std::max_element(seg.begin(), seg.end()), 0.525, 1e-3);
}

TEST(RandomCut, RotationProperties) {
  RandomSource rng(9);
  RealMatrix m(5, 12);
  for (auto& v : m.data) v = rng.uniform(0, 1);
  EXPECT_EQ(rotate_columns(m, 0), m);
  for (std::size_t c = 1; c < 12; ++c) EXPECT_EQ(rotate_columns(rotate_columns(m, c), 12 - c), m);
  MelSpectrogram mel{m, {}};
  AugmentTrace t;
  auto cut = random_cut(mel, rng, &t);
  ASSERT_TRUE(t.cut.has_value());
  EXPECT_GE(*t.cut, 1u);
  EXPECT_LE(*t.cut, 11u);
  std::multiset<std::vector<double>> before, after;
  for (std::size_t c = 0; c < 12; ++c) {
    std::vector<double> a, b;
    for (std::size_t r = 0; r < 5; ++r) {
      a.push_back(m(r, c));
      b.push_back(cut.values(r, c));
    }
    before.insert(a);
    after.insert(b);
  }
  EXPECT_EQ(before, after);
  MelSpectrogram narrow{RealMatrix(5, 1, 0.5), {}};
  EXPECT_EQ(random_cut(narrow, rng).values, narrow.values);
}

TEST(PitchShift, IdentityShapeAndCentroid) {
  AugmentConfig cfg;
  cfg.pitch_jitter = 0;
  RandomSource rng(10);
  RealMatrix m(80, 16);
  for (auto& v : m.data) v = rng.uniform(0, 1);
  auto same = pitch_shift(MelSpectrogram{m, {}}, cfg, rng);
  for (std::size_t i = 0; i < m.data.size(); ++i) EXPECT_NEAR(same.values.data[i], m.data[i], 1e-9);

  RealMatrix line(80, 4, 0.0);
  const std::size_t row = 60;
  for (std::size_t c = 0; c < 4; ++c) line(row, c) = 1.0;
  auto shifted = scale_rows(line, 1.05);
  double num = 0, den = 0;
  for (std::size_t r = 0; r < 80; ++r) {
    num += r * shifted(r, 0);
    den += shifted(r, 0);
  }
  EXPECT_NEAR(num / den, row / 1.05, 0.5);

  for (int i = 0; i < 20; ++i) {
    auto out = pitch_shift(MelSpectrogram{m, {}}, AugmentConfig{}, rng);
    EXPECT_EQ(out.values.rows, 80u);
    EXPECT_EQ(out.values.cols, 16u);
  }
}

TEST(Pipeline, DisabledEqualsPlainFeatures) {
  auto sound = tone(40000, 0.4);
  auto other = tone(40000, 0.2);
  AugmentSources src{sound, {other}, {other}, {other}, 22050, 32768, 256};
  RandomSource a(11), b(11);
  auto mel = augment_pipeline(src, AugmentConfig::disabled(), a);
  auto seg = extract_segment(sound, 32768, b);
  auto plain = segment_features(seg, 22050, 256);
  EXPECT_EQ(mel.values, plain.values);
  EXPECT_EQ(mel.values.rows, 80u);
  EXPECT_EQ(mel.values.cols, 512u);
}

TEST(Pipeline, SeededRunsAreIdentical) {
  auto sound = tone(30000, 0.4);
  auto other = tone(50000, 0.2);
  AugmentSources src{sound, {other}, {other}, {other}, 22050, 65536, 512};
  RandomSource a(12), b(12);
  AugmentTrace ta, tb;
  auto x = augment_pipeline(src, AugmentConfig{}, a, &ta);
  auto y = augment_pipeline(src, AugmentConfig{}, b, &tb);
  EXPECT_EQ(x.values, y.values);
  EXPECT_EQ(x.values.rows, 80u);
  EXPECT_EQ(x.values.cols, 512u);
  EXPECT_EQ(ta.cut, tb.cut);
}
