#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "json.hpp"

#include "birdsong/augment.hpp"
#include "birdsong/common.hpp"
#include "birdsong/net.hpp"
#include "birdsong/segmentation.hpp"
#include "birdsong/train.hpp"

namespace birdsong {

/// Everything a CLI run needs, loadable from one JSON file. Absent keys keep
/// their defaults; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  double sample_rate = 22050.0;
  SegmentationConfig segmentation;
  AugmentConfig augment;
  NetworkConfig network;  // num_classes comes from the manifest
  TrainingConfig training;
  double val_fraction = 0.1;
  std::string manifest;
  std::string cache_dir;
  std::string output_dir;

  void validate() const {
    if (!(sample_rate > 0)) throw ConfigError("sample_rate must be positive");
    if (threads == 0) throw ConfigError("threads must be at least 1");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
    segmentation.validate();
    augment.validate();
    training.validate();
  }
};

namespace detail {

class JsonReader {
 public:
  JsonReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type");
    }
  }

  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.contains(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  detail::JsonReader root(j, "config");
  root.read("seed", c.seed);
  root.read("threads", c.threads);
  root.read("sample_rate", c.sample_rate);
  root.read("val_fraction", c.val_fraction);
  if (auto* s = root.child("segmentation")) {
    detail::JsonReader r(*s, "segmentation");
    auto& g = c.segmentation;
    r.read("sound_factor", g.sound_factor);
    r.read("noise_factor", g.noise_factor);
    r.read("struct_size", g.struct_size);
    r.read("indicator_dilations", g.indicator_dilations);
    r.read("threshold_step", g.threshold_step);
    r.read("min_factor", g.min_factor);
    r.read("min_sound_samples", g.min_sound_samples);
    r.read("window_size", g.window_size);
    r.read("hop", g.hop);
    r.finish();
  }
  if (auto* s = root.child("augment")) {
    detail::JsonReader r(*s, "augment");
    auto& a = c.augment;
    r.read("noise_overlays_max", a.noise_overlays_max);
    r.read("noise_overlay_prob", a.noise_overlay_prob);
    r.read("noise_volume_jitter", a.noise_volume_jitter);
    r.read("same_class_prob", a.same_class_prob);
    r.read("same_class_damp_lo", a.same_class_damp_lo);
    r.read("same_class_damp_hi", a.same_class_damp_hi);
    r.read("neighbor_prob", a.neighbor_prob);
    r.read("neighbor_damp_center", a.neighbor_damp_center);
    r.read("neighbor_damp_jitter", a.neighbor_damp_jitter);
    r.read("volume_jitter", a.volume_jitter);
    r.read("pitch_jitter", a.pitch_jitter);
    bool enabled = true;
    r.read("enabled", enabled);
    if (!enabled) a = AugmentConfig::disabled();
    r.finish();
  }
  if (auto* s = root.child("network")) {
    detail::JsonReader r(*s, "network");
    auto& n = c.network;
    r.read("conv_filters", n.conv_filters);
    r.read("kernel", n.kernel);
    r.read("metadata_units", n.metadata_units);
    r.read("head_units", n.head_units);
    r.read("dropout_input", n.dropout_input);
    r.read("dropout_flatten", n.dropout_flatten);
    r.read("dropout_head", n.dropout_head);
    r.finish();
  }
  if (auto* s = root.child("training")) {
    detail::JsonReader r(*s, "training");
    auto& t = c.training;
    r.read("batch_size", t.batch_size);
    r.read("segment_samples", t.segment_samples);
    r.read("fft_window", t.fft_window);
    r.read("lr", t.lr);
    r.read("momentum", t.momentum);
    r.read("epochs", t.epochs);
    r.read("checkpoint_interval", t.checkpoint_interval);
    r.finish();
  }
  if (auto* s = root.child("paths")) {
    detail::JsonReader r(*s, "paths");
    r.read("manifest", c.manifest);
    r.read("cache_dir", c.cache_dir);
    r.read("output_dir", c.output_dir);
    r.finish();
  }
  root.finish();
  c.training.seed = c.seed;
  c.training.threads = c.threads;
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  try {
    return parse_run_config(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

}  // namespace birdsong
