#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "birdsong/common.hpp"
#include "birdsong/corpus.hpp"
#include "birdsong/dsp.hpp"
#include "birdsong/metadata.hpp"
#include "birdsong/net.hpp"
#include "birdsong/text.hpp"

namespace birdsong {

struct Prediction {
  std::string recording_id;
  std::vector<double> probabilities;

  bool operator==(const Prediction&) const = default;
};

using PredictionSet = std::vector<Prediction>;

struct RelevanceJudgment {
  std::string recording_id;
  int main_species = 0;
  std::set<int> background_species;

  bool operator==(const RelevanceJudgment&) const = default;
};

enum class MapMode { MainOnly, WithBackground };

/// Window starts 0, L/2, L, ... up to the first window reaching the end; a short
/// final window is filled by looping the recording from its start.
inline std::vector<std::size_t> segment_starts(std::size_t length, std::size_t segment_samples) {
  if (length == 0 || segment_samples == 0) throw ValidationError("segment_recording needs a non-empty recording");
  const std::size_t step = std::max<std::size_t>(1, segment_samples / 2);
  std::vector<std::size_t> starts;
  for (std::size_t s = 0;; s += step) {
    starts.push_back(s);
    if (s + segment_samples >= length) break;
  }
  return starts;
}

inline std::vector<std::vector<double>> segment_recording(std::span<const double> w, std::size_t segment_samples) {
  std::vector<std::vector<double>> out;
  for (std::size_t s : segment_starts(w.size(), segment_samples)) {
    std::vector<double> seg(segment_samples);
    for (std::size_t i = 0; i < segment_samples; ++i) seg[i] = w[(s + i) % w.size()];
    out.push_back(std::move(seg));
  }
  return out;
}

/// Divides by the sum unless the vector already sums to 1 within 1e-12.
inline std::vector<double> renormalize(std::vector<double> p) {
  const double sum = std::accumulate(p.begin(), p.end(), 0.0);
  if (!(sum > 0.0)) throw ValidationError("cannot renormalize a vector with non-positive sum");
  if (std::abs(sum - 1.0) > 1e-12)
    for (auto& v : p) v /= sum;
  return p;
}

/// Per-class arithmetic mean over rows; each class sums its values in sorted
/// order, so the result does not depend on row order.
inline std::vector<double> mean_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ValidationError("cannot average zero prediction vectors");
  const std::size_t k = rows.front().size();
  std::vector<double> out(k), column(rows.size());
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != k) throw ValidationError("prediction vectors differ in class count");
      column[r] = rows[r][c];
    }
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (double v : column) sum += v;
    out[c] = sum / static_cast<double>(rows.size());
  }
  return out;
}

/// Averages `model(segment)` over the given segments and renormalizes.
template <typename Model>
std::vector<double> average_segment_predictions(const std::vector<std::vector<double>>& segments, Model&& model) {
  std::vector<std::vector<double>> outs;
  outs.reserve(segments.size());
  for (const auto& s : segments) outs.push_back(model(s));
  return renormalize(mean_rows(outs));
}

struct InferenceConfig {
  std::size_t segment_samples = 32768;
  std::size_t fft_window = 256;
  std::size_t threads = 1;
};

template <typename T>
std::vector<double> segment_probabilities(const NetworkParams<T>& params, std::span<const double> segment,
                                          const MetadataVector& meta, double sample_rate, std::size_t fft_window) {
  const auto mel = segment_features(segment, sample_rate, fft_window);
  const std::vector<T> x(mel.values.data.begin(), mel.values.data.end());
  const std::vector<T> m(meta.v.begin(), meta.v.end());
  const auto p = predict_probabilities<T>(params, x, m);
  return std::vector<double>(p.begin(), p.end());
}

template <typename T>
Prediction predict_recording(const std::string& id, const Waveform& w, const MetadataVector& meta,
                             const NetworkParams<T>& params, const InferenceConfig& cfg) {
  const auto segments = segment_recording(w.samples, cfg.segment_samples);
  auto probs = average_segment_predictions(segments, [&](const std::vector<double>& s) {
    return segment_probabilities(params, s, meta, w.sample_rate, cfg.fft_window);
  });
  return {id, std::move(probs)};
}

/// Per-recording, per-class mean over runs, renormalized.
inline PredictionSet ensemble_average(const std::vector<PredictionSet>& runs) {
  if (runs.empty()) throw ValidationError("ensemble_average needs at least one prediction set");
  PredictionSet out;
  for (std::size_t r = 0; r < runs.front().size(); ++r) {
    const auto& id = runs.front()[r].recording_id;
    std::vector<std::vector<double>> rows;
    for (const auto& run : runs) {
      if (run.size() != runs.front().size() || run[r].recording_id != id)
        throw ValidationError("ensemble_average: prediction sets cover different recordings");
      rows.push_back(run[r].probabilities);
    }
    out.push_back({id, renormalize(mean_rows(rows))});
  }
  return out;
}

/// Class ids by descending probability, ascending id on ties.
inline std::vector<int> rank_classes(std::span<const double> probabilities) {
  std::vector<int> order(probabilities.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return probabilities[static_cast<std::size_t>(a)] > probabilities[static_cast<std::size_t>(b)];
  });
  return order;
}

inline double average_precision(std::span<const int> ranking, const std::set<int>& relevant) {
  if (relevant.empty()) throw ValidationError("average_precision: empty relevant set");
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < ranking.size(); ++k)
    if (relevant.contains(ranking[k])) sum += static_cast<double>(++hits) / static_cast<double>(k + 1);
  return sum / static_cast<double>(relevant.size());
}

inline std::set<int> relevant_set(const RelevanceJudgment& j, MapMode mode) {
  std::set<int> rel{j.main_species};
  if (mode == MapMode::WithBackground) rel.insert(j.background_species.begin(), j.background_species.end());
  return rel;
}

inline double map_score(const PredictionSet& predictions, const std::vector<RelevanceJudgment>& judgments, MapMode mode) {
  if (judgments.empty()) throw ValidationError("map_score: no judgments");
  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : predictions) by_id[p.recording_id] = &p;
  double sum = 0.0;
  for (const auto& j : judgments) {
    auto it = by_id.find(j.recording_id);
    if (it == by_id.end()) throw ValidationError("map_score: no prediction for recording " + j.recording_id);
    sum += average_precision(rank_classes(it->second->probabilities), relevant_set(j, mode));
  }
  return sum / static_cast<double>(judgments.size());
}

// ---------------------------------------------------------------------------
// CSV files

inline constexpr std::string_view kPredictionHeader = "recording_id,class_id,probability";
inline constexpr std::string_view kJudgmentHeader = "recording_id,main_species,background_species";

inline void write_predictions(std::ostream& out, const PredictionSet& set) {
  out << kPredictionHeader << '\n';
  for (const auto& p : set)
    for (std::size_t c = 0; c < p.probabilities.size(); ++c)
      out << p.recording_id << ',' << c << ',' << text::format_real(p.probabilities[c]) << '\n';
}

inline PredictionSet read_predictions(std::istream& in) {
  PredictionSet set;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    if (lineno == 1) {
      if (text::trim(line) != kPredictionHeader) throw ParseError("unexpected prediction header", lineno);
      continue;
    }
    const auto f = text::split(line);
    if (f.size() != 3) throw ParseError("expected 3 fields", lineno);
    const std::string id(f[0]);
    const auto cls = text::require_number<std::size_t>(f[1], "class_id", lineno);
    const auto prob = text::require_number<double>(f[2], "probability", lineno);
    auto [it, fresh] = index.try_emplace(id, set.size());
    if (fresh) set.push_back({id, {}});
    auto& probs = set[it->second].probabilities;
    if (cls != probs.size()) throw ParseError("class ids of " + id + " must be listed as 0, 1, 2, ...", lineno);
    probs.push_back(prob);
  }
  if (lineno == 0) throw ParseError("empty prediction file");
  for (const auto& p : set)
    if (p.probabilities.size() != set.front().probabilities.size())
      throw ValidationError("recording " + p.recording_id + " lists a different number of classes");
  return set;
}

inline void write_judgments(std::ostream& out, const std::vector<RelevanceJudgment>& js) {
  out << kJudgmentHeader << '\n';
  for (const auto& j : js) {
    out << j.recording_id << ',' << j.main_species << ',';
    bool first = true;
    for (int b : j.background_species) {
      out << (first ? "" : ";") << b;
      first = false;
    }
    out << '\n';
  }
}

inline std::vector<RelevanceJudgment> read_judgments(std::istream& in) {
  std::vector<RelevanceJudgment> js;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    if (lineno == 1) {
      if (text::trim(line) != kJudgmentHeader) throw ParseError("unexpected judgment header", lineno);
      continue;
    }
    const auto f = text::split(line);
    if (f.size() != 3) throw ParseError("expected 3 fields", lineno);
    RelevanceJudgment j;
    j.recording_id = std::string(f[0]);
    j.main_species = text::require_number<int>(f[1], "main_species", lineno);
    if (!text::trim(f[2]).empty())
      for (auto b : text::split(f[2], ';')) j.background_species.insert(text::require_number<int>(b, "background_species", lineno));
    if (j.background_species.contains(j.main_species))
      throw ValidationError("line " + std::to_string(lineno) + ": main species repeated among background species");
    js.push_back(std::move(j));
  }
  if (lineno == 0) throw ParseError("empty judgment file");
  return js;
}

/// Main-species judgments straight from a manifest.
inline std::vector<RelevanceJudgment> judgments_from_manifest(const CorpusManifest& m) {
  std::vector<RelevanceJudgment> js;
  for (const auto& e : m.entries) js.push_back({e.recording_id, e.species_id, {}});
  return js;
}

}  // namespace birdsong
