#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "birdsong/checkpoint.hpp"
#include "birdsong/config.hpp"
#include "birdsong/corpus.hpp"
#include "birdsong/infer.hpp"
#include "birdsong/segmentation.hpp"
#include "birdsong/text.hpp"
#include "birdsong/train.hpp"
#include "birdsong/wav.hpp"

namespace birdsong::app {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Data errors raised by the commands themselves (missing cache, no readable audio, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitUsage;
  return kExitData;
}

/// Stream ids for seeds derived from the run seed.
enum class Stream : std::uint64_t { Init = 1, Split = 2, Metadata = 3 };

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

inline std::uint64_t stream_seed(std::uint64_t seed, Stream s, std::uint64_t key = 0) {
  return derive_seed(seed, static_cast<std::uint64_t>(s), key, 0);
}

inline void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("failed writing " + path.string());
}

inline fs::path mask_path(const fs::path& cache_dir, const std::string& id) { return cache_dir / (id + ".mask"); }

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessReport {
  std::size_t succeeded = 0;
  std::vector<std::pair<std::string, std::string>> failures;  // id, reason
};

/// Writes `<id>.mask` per readable recording, `summary.csv` and `failures.txt`.
inline PreprocessReport cmd_preprocess(const fs::path& manifest_path, const fs::path& out_dir, const RunConfig& cfg,
                                       std::ostream& log) {
  cfg.validate();
  const auto manifest = load_manifest(manifest_path);
  fs::create_directories(out_dir);
  const std::size_t n = manifest.size();
  std::vector<std::optional<SegmentationResult>> results(n);
  std::vector<std::string> errors(n);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    try {
      const auto w = decode_audio(fs::path(manifest.entries[i].audio_path), cfg.sample_rate);
      if (w.samples.empty()) throw AudioFormatError("no samples");
      results[i] = separate_recording(w, cfg.segmentation);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  PreprocessReport report;
  std::ostringstream summary, failures;
  summary << "recording_id,samples,sound_samples,noise_samples,threshold\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto& id = manifest.entries[i].recording_id;
    if (!results[i]) {
      report.failures.emplace_back(id, errors[i]);
      failures << id << ": " << errors[i] << '\n';
      log << "skipping " << id << ": " << errors[i] << '\n';
      continue;
    }
    const auto& r = *results[i];
    std::ostringstream mask;
    write_segmentation(mask, r);
    write_text(mask_path(out_dir, id), mask.str());
    summary << id << ',' << r.size() << ',' << r.sound_count() << ',' << r.noise_count() << ','
            << text::format_fixed(r.sound_threshold_used, 1) << '\n';
    ++report.succeeded;
  }
  write_text(out_dir / "summary.csv", summary.str());
  write_text(out_dir / "failures.txt", failures.str());
  log << "preprocessed " << report.succeeded << " of " << n << " recordings\n";
  if (report.succeeded == 0) throw DataError("no recording could be preprocessed");
  return report;
}

// ---------------------------------------------------------------------------
// shared loading

inline std::set<std::string> read_failures(const fs::path& cache_dir) {
  std::set<std::string> ids;
  std::ifstream in(cache_dir / "failures.txt");
  std::string line;
  while (std::getline(in, line))
    if (auto p = line.find(": "); p != std::string::npos) ids.insert(line.substr(0, p));
  return ids;
}

struct LoadedCorpus {
  CorpusManifest manifest;
  std::vector<Waveform> audio;
  std::vector<SegmentationResult> segmentation;
};

/// Audio and cached segmentation for every manifest entry; entries that failed
/// preprocessing are dropped.
inline LoadedCorpus load_cached(const CorpusManifest& m, const fs::path& cache_dir, double rate, std::size_t threads,
                                std::ostream& log) {
  if (!fs::is_directory(cache_dir)) throw DataError("missing preprocess cache '" + cache_dir.string() + "'");
  const auto failed = read_failures(cache_dir);
  LoadedCorpus out;
  out.manifest.num_species = m.num_species;
  for (const auto& e : m.entries) {
    if (failed.contains(e.recording_id)) {
      log << "skipping " << e.recording_id << " (failed preprocessing)\n";
      continue;
    }
    out.manifest.entries.push_back(e);
  }
  const std::size_t n = out.manifest.size();
  out.audio.resize(n);
  out.segmentation.resize(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const auto& e = out.manifest.entries[i];
    const auto path = mask_path(cache_dir, e.recording_id);
    std::ifstream in(path);
    if (!in) throw DataError("missing cache entry '" + path.string() + "'");
    out.segmentation[i] = read_segmentation(in);
    out.audio[i] = decode_audio(fs::path(e.audio_path), rate);
    if (out.segmentation[i].size() != out.audio[i].size())
      throw DataError("cache entry for " + e.recording_id + " does not match its audio; re-run preprocess");
  });
  return out;
}

inline LoadedCorpus subset(const LoadedCorpus& all, const CorpusManifest& part) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < all.manifest.size(); ++i) index[all.manifest.entries[i].recording_id] = i;
  LoadedCorpus out;
  out.manifest = part;
  for (const auto& e : part.entries) {
    const auto i = index.at(e.recording_id);
    out.audio.push_back(all.audio[i]);
    out.segmentation.push_back(all.segmentation[i]);
  }
  return out;
}

inline MetadataVector inference_metadata(const ManifestEntry& e, const SpeciesAttributeStats& stats, std::uint64_t seed) {
  RandomSource rng(stream_seed(seed, Stream::Metadata, fnv1a(e.recording_id)));
  return metadata_vector(e.metadata, stats, rng, kGlobalStats);
}

inline PredictionSet predict_all(const Checkpoint& ck, const CorpusManifest& m, const std::vector<Waveform>& audio,
                                 std::uint64_t seed, std::size_t threads) {
  InferenceConfig icfg{ck.training.segment_samples, ck.training.fft_window, threads};
  PredictionSet out(m.size());
  parallel_for(m.size(), threads, [&](std::size_t i) {
    const auto& e = m.entries[i];
    out[i] = predict_recording(e.recording_id, audio[i], inference_metadata(e, ck.stats, seed), ck.params, icfg);
  });
  return out;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::optional<int> epochs;  // total epochs to reach
  std::optional<fs::path> resume;
  bool full_split = false;  // otherwise hold out val_fraction
};

inline std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%04d.ckpt", epoch);
  return buf;
}

/// Trains from scratch or from `opts.resume` up to the configured epoch count,
/// writing checkpoints and `train_log.csv` into `out_dir`.
inline std::vector<fs::path> cmd_train(const fs::path& manifest_path, const fs::path& cache_dir, const fs::path& out_dir,
                                       RunConfig cfg, const TrainOptions& opts, std::ostream& log) {
  if (opts.epochs) cfg.training.epochs = *opts.epochs;
  cfg.validate();
  const auto manifest = load_manifest(manifest_path);
  const auto all = load_cached(manifest, cache_dir, cfg.sample_rate, cfg.threads, log);
  if (all.manifest.entries.empty()) throw DataError("no usable training recordings");

  CorpusManifest train_part = all.manifest, val_part;
  if (!opts.full_split && cfg.val_fraction > 0.0)
    std::tie(train_part, val_part) = split_train_val(all.manifest, cfg.val_fraction, stream_seed(cfg.seed, Stream::Split));
  const auto train_data = subset(all, train_part);
  const auto val_data = subset(all, val_part);
  const auto corpus = build_training_corpus(train_data.manifest, train_data.audio, train_data.segmentation);

  NetworkConfig net = cfg.network;
  net.num_classes = static_cast<std::size_t>(manifest.num_species);
  Checkpoint ck;
  if (opts.resume) {
    ck = load_checkpoint(*opts.resume);
    require_compatible(net, ck.params.config);
    log << "resuming from " << opts.resume->string() << " at epoch " << ck.epoch << '\n';
  } else {
    RandomSource init(stream_seed(cfg.seed, Stream::Init));
    ck.params = init_params<float>(net, init);
  }
  ck.training = cfg.training;
  ck.stats = corpus.stats;
  ck.seed = cfg.seed;

  fs::create_directories(out_dir);
  const auto log_path = out_dir / "train_log.csv";
  const bool append = opts.resume && fs::exists(log_path);
  std::ofstream train_log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!train_log) throw Error("cannot write " + log_path.string());
  if (!append) train_log << "epoch,mean_loss,val_map,elapsed_s\n";

  std::vector<fs::path> written;
  const auto start = std::chrono::steady_clock::now();
  for (int epoch = ck.epoch; epoch < cfg.training.epochs; ++epoch) {
    const auto r = train_epoch(ck.params, corpus, cfg.augment, cfg.training, epoch);
    ck.epoch = epoch + 1;
    std::string val_map;
    if (val_data.manifest.size() > 0) {
      const auto preds = predict_all(ck, val_data.manifest, val_data.audio, cfg.seed, cfg.threads);
      val_map = text::format_fixed(map_score(preds, judgments_from_manifest(val_data.manifest), MapMode::MainOnly), 6);
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    train_log << ck.epoch << ',' << text::format_fixed(r.mean_loss, 6) << ',' << val_map << ','
              << text::format_fixed(elapsed, 1) << '\n';
    train_log.flush();
    log << "epoch " << ck.epoch << " loss " << text::format_fixed(r.mean_loss, 4)
        << (val_map.empty() ? "" : " val_map " + val_map) << '\n';
    if (ck.epoch % cfg.training.checkpoint_interval == 0 || ck.epoch == cfg.training.epochs) {
      written.push_back(out_dir / checkpoint_name(ck.epoch));
      save_checkpoint(ck, written.back());
    }
  }
  return written;
}

// ---------------------------------------------------------------------------
// predict

inline PredictionSet cmd_predict(const std::vector<fs::path>& checkpoints, const fs::path& manifest_path,
                                 const fs::path& out_csv, const RunConfig& cfg, std::ostream& log) {
  if (checkpoints.empty()) throw ConfigError("predict needs at least one checkpoint");
  std::vector<Checkpoint> cks;
  for (const auto& p : checkpoints) cks.push_back(load_checkpoint(p));
  for (std::size_t i = 1; i < cks.size(); ++i) {
    if (cks[i].params.config.num_classes != cks[0].params.config.num_classes)
      throw DataError("incompatible checkpoints: " + checkpoints[0].string() + " and " + checkpoints[i].string() +
                      " differ in class count");
  }
  const auto manifest = load_manifest(manifest_path);
  std::vector<Waveform> audio(manifest.size());
  parallel_for(manifest.size(), cfg.threads, [&](std::size_t i) {
    audio[i] = decode_audio(fs::path(manifest.entries[i].audio_path), cfg.sample_rate);
  });
  std::vector<PredictionSet> runs;
  for (const auto& ck : cks) runs.push_back(predict_all(ck, manifest, audio, cfg.seed, cfg.threads));
  auto result = runs.size() == 1 ? runs.front() : ensemble_average(runs);
  std::ostringstream csv;
  write_predictions(csv, result);
  if (!out_csv.parent_path().empty()) fs::create_directories(out_csv.parent_path());
  write_text(out_csv, csv.str());
  log << "wrote " << result.size() << " predictions from " << cks.size() << " checkpoint(s)\n";
  return result;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateResult {
  double map = 0.0;
  std::vector<std::pair<std::string, double>> per_recording;
};

inline EvaluateResult evaluate(const PredictionSet& preds, const std::vector<RelevanceJudgment>& judgments, MapMode mode) {
  EvaluateResult r;
  r.map = map_score(preds, judgments, mode);
  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : preds) by_id[p.recording_id] = &p;
  for (const auto& j : judgments)
    r.per_recording.emplace_back(j.recording_id,
                                 average_precision(rank_classes(by_id.at(j.recording_id)->probabilities), relevant_set(j, mode)));
  return r;
}

/// Prints `MAP=x.xxxx`; writes per-recording AP to `out_csv` when given.
inline EvaluateResult cmd_evaluate(const fs::path& predictions_csv, const std::vector<RelevanceJudgment>& judgments,
                                   MapMode mode, const std::optional<fs::path>& out_csv, std::ostream& out) {
  std::ifstream in(predictions_csv);
  if (!in) throw DataError("cannot open predictions '" + predictions_csv.string() + "'");
  const auto r = evaluate(read_predictions(in), judgments, mode);
  if (out_csv) {
    std::ostringstream csv;
    csv << "recording_id,average_precision\n";
    for (const auto& [id, ap] : r.per_recording) csv << id << ',' << text::format_fixed(ap, 6) << '\n';
    write_text(*out_csv, csv.str());
  }
  out << "MAP=" << text::format_fixed(r.map, 4) << '\n';
  return r;
}

inline std::vector<RelevanceJudgment> load_judgments(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open judgments '" + path.string() + "'");
  return read_judgments(in);
}

}  // namespace birdsong::app
