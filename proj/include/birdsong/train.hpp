#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "birdsong/augment.hpp"
#include "birdsong/corpus.hpp"
#include "birdsong/dsp.hpp"
#include "birdsong/metadata.hpp"
#include "birdsong/net.hpp"
#include "birdsong/segmentation.hpp"

namespace birdsong {

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct TrainingConfig {
  std::size_t batch_size = 16;
  std::size_t segment_samples = 32768;
  std::size_t fft_window = 256;
  double lr = 0.001;
  double momentum = 0.9;
  int epochs = 1;
  std::uint64_t seed = 0;
  int checkpoint_interval = 1;
  std::size_t threads = 1;

  std::size_t hop() const noexcept { return fft_window / 4; }
  std::size_t frames() const noexcept { return stft_frame_count(segment_samples, hop()); }

  void validate() const {
    const bool paired = (fft_window == 256 && segment_samples == 32768) || (fft_window == 512 && segment_samples == 65536);
    if (!paired) throw ConfigError("(fft_window, segment_samples) must be (256, 32768) or (512, 65536)");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(lr >= 0.0) || !(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("lr must be >= 0 and momentum in [0, 1)");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (checkpoint_interval < 1) throw ConfigError("checkpoint_interval must be at least 1");
  }

  bool operator==(const TrainingConfig&) const = default;
};

/// One training recording with its sound- and noise-masked samples.
struct TrainingRecording {
  ManifestEntry entry;
  std::vector<double> sound;
  std::vector<double> noise;
};

struct TrainingCorpus {
  std::vector<TrainingRecording> recordings;
  int num_species = 0;
  double sample_rate = 22050.0;
  SpeciesAttributeStats stats;
  std::vector<std::vector<std::size_t>> same_class;  // other recordings of the same species
  std::vector<std::vector<std::size_t>> neighbors;   // recordings of neighboring species

  std::size_t size() const noexcept { return recordings.size(); }
};

/// `audio[i]` and `segmentation[i]` belong to `manifest.entries[i]`.
inline TrainingCorpus build_training_corpus(const CorpusManifest& manifest, const std::vector<Waveform>& audio,
                                            const std::vector<SegmentationResult>& segmentation) {
  if (manifest.entries.empty()) throw TrainingError("empty training split");
  if (audio.size() != manifest.size() || segmentation.size() != manifest.size())
    throw ValidationError("training corpus: audio/segmentation count does not match manifest");
  TrainingCorpus c;
  c.num_species = manifest.num_species;
  c.sample_rate = audio.front().sample_rate;
  c.stats = compute_species_stats(manifest);
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& w = audio[i].samples;
    if (w.empty()) throw TrainingError("recording " + manifest.entries[i].recording_id + " has no samples");
    if (segmentation[i].size() != w.size())
      throw ValidationError("segmentation of " + manifest.entries[i].recording_id + " does not match its audio length");
    auto sound = masked_samples(w, segmentation[i].sound_mask);
    if (sound.empty()) sound = w;
    c.recordings.push_back({manifest.entries[i], std::move(sound), masked_samples(w, segmentation[i].noise_mask)});
  }

  const auto index = build_neighbor_index(manifest);
  c.same_class.resize(c.size());
  c.neighbors.resize(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& me = c.recordings[i].entry;
    const auto near = index.neighbors(me.recording_id);
    for (std::size_t j = 0; j < c.size(); ++j) {
      const int sp = c.recordings[j].entry.species_id;
      if (j != i && sp == me.species_id) c.same_class[i].push_back(j);
      if (std::binary_search(near.begin(), near.end(), sp)) c.neighbors[i].push_back(j);
    }
  }
  return c;
}

struct TrainingSample {
  std::size_t recording = 0;
  MelSpectrogram spectrogram;
  MetadataVector metadata;
  int label = 0;
};

/// Augmented spectrogram and metadata vector of recording `i`.
inline TrainingSample compose_sample(const TrainingCorpus& corpus, std::size_t i, const AugmentConfig& aug,
                                     const TrainingConfig& cfg, RandomSource& rng) {
  const auto& rec = corpus.recordings.at(i);
  AugmentSources src;
  src.sound = rec.sound;
  for (auto j : corpus.same_class[i]) src.same_class.emplace_back(corpus.recordings[j].sound);
  for (auto j : corpus.neighbors[i]) src.neighbors.emplace_back(corpus.recordings[j].sound);
  for (const auto& r : corpus.recordings)
    if (!r.noise.empty()) src.noise.emplace_back(r.noise);
  src.sample_rate = corpus.sample_rate;
  src.segment_samples = cfg.segment_samples;
  src.fft_window = cfg.fft_window;
  TrainingSample s;
  s.recording = i;
  s.spectrogram = augment_pipeline(src, aug, rng);
  s.metadata = metadata_vector(rec.entry.metadata, corpus.stats, rng);
  s.label = rec.entry.species_id;
  return s;
}

/// Recording indices and per-sample seeds of one batch, drawn with replacement.
struct BatchPlan {
  std::vector<std::size_t> recordings;
  std::vector<std::uint64_t> seeds;
};

inline BatchPlan plan_batch(const TrainingCorpus& corpus, const TrainingConfig& cfg, RandomSource& rng) {
  if (corpus.size() == 0) throw TrainingError("empty training split");
  BatchPlan p;
  for (std::size_t k = 0; k < cfg.batch_size; ++k) {
    p.recordings.push_back(rng.index(corpus.size()));
    p.seeds.push_back(rng.engine()());
  }
  return p;
}

inline std::vector<TrainingSample> compose_batch(const TrainingCorpus& corpus, const AugmentConfig& aug,
                                                 const TrainingConfig& cfg, RandomSource& rng) {
  const auto plan = plan_batch(corpus, cfg, rng);
  std::vector<TrainingSample> out(plan.recordings.size());
  parallel_for(out.size(), cfg.threads, [&](std::size_t k) {
    RandomSource r(plan.seeds[k]);
    out[k] = compose_sample(corpus, plan.recordings[k], aug, cfg, r);
  });
  return out;
}

template <typename T>
std::vector<T> flatten_input(const RealMatrix& m) {
  return std::vector<T>(m.data.begin(), m.data.end());
}

template <typename T>
std::vector<T> flatten_input(const MetadataVector& m) {
  return std::vector<T>(m.v.begin(), m.v.end());
}

struct EpochResult {
  double mean_loss = 0.0;
  std::size_t batches = 0;
};

inline std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size) { return (n + batch_size - 1) / batch_size; }

/// One epoch of ceil(N / batch_size) batches. The epoch's random stream depends
/// only on (cfg.seed, epoch), so training can resume at any epoch boundary.
/// Each sample keeps its own stream for augmentation, imputation and dropout;
/// gradients are summed per worker in index order and averaged over the batch.
template <typename T>
EpochResult train_epoch(NetworkParams<T>& params, const TrainingCorpus& corpus, const AugmentConfig& aug,
                        const TrainingConfig& cfg, int epoch) {
  cfg.validate();
  if (params.config.num_classes != static_cast<std::size_t>(corpus.num_species))
    throw ConfigError("network num_classes does not match corpus species count");
  RandomSource rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), 0, 0));
  EpochResult result;
  result.batches = batches_per_epoch(corpus.size(), cfg.batch_size);
  const std::size_t workers = std::clamp<std::size_t>(cfg.threads, 1, cfg.batch_size);
  double loss_sum = 0;
  for (std::size_t b = 0; b < result.batches; ++b) {
    const auto plan = plan_batch(corpus, cfg, rng);
    const std::size_t n = plan.recordings.size();
    std::vector<std::vector<Tensor<T>>> grads(workers);
    std::vector<double> losses(n);
    parallel_for(workers, workers, [&](std::size_t w) {
      grads[w] = zero_like<T>(params.config);
      for (std::size_t k = w; k < n; k += workers) {
        RandomSource r(plan.seeds[k]);
        const auto s = compose_sample(corpus, plan.recordings[k], aug, cfg, r);
        const auto x = flatten_input<T>(s.spectrogram.values);
        const auto m = flatten_input<T>(s.metadata);
        losses[k] = static_cast<double>(
            loss_and_gradient<T>(params, x, m, static_cast<std::size_t>(s.label), Mode::Train, r, grads[w]));
      }
    });
    double batch_loss = 0;
    for (double l : losses) batch_loss += l;
    batch_loss /= static_cast<double>(n);
    if (!std::isfinite(batch_loss)) {
      std::ostringstream msg;
      msg << "non-finite loss in epoch " << epoch << " batch " << b << " (recordings:";
      for (auto i : plan.recordings) msg << ' ' << corpus.recordings[i].entry.recording_id;
      msg << ')';
      throw TrainingError(msg.str());
    }
    auto& total = grads[0];
    for (std::size_t w = 1; w < workers; ++w)
      for (std::size_t s = 0; s < total.size(); ++s)
        for (std::size_t i = 0; i < total[s].size(); ++i) total[s].data[i] += grads[w][s].data[i];
    const T scale = static_cast<T>(1.0 / static_cast<double>(n));
    for (auto& g : total)
      for (auto& v : g.data) v *= scale;
    sgd_nesterov_step(params, total, cfg.lr, cfg.momentum);
    loss_sum += batch_loss;
  }
  result.mean_loss = loss_sum / static_cast<double>(result.batches);
  return result;
}

}  // namespace birdsong
