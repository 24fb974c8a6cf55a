#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "birdsong/metadata.hpp"
#include "birdsong/net.hpp"
#include "birdsong/train.hpp"

namespace birdsong {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class CheckpointError : public Error {
 public:
  using Error::Error;
};

inline constexpr char kCheckpointMagic[4] = {'B', 'S', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  NetworkParams<float> params;
  TrainingConfig training;
  SpeciesAttributeStats stats;
  int epoch = 0;  // epochs completed
  std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const NetworkConfig& c) {
  return {{"conv_filters", c.conv_filters}, {"kernel", c.kernel},
          {"metadata_units", c.metadata_units}, {"head_units", c.head_units},
          {"dropout_input", c.dropout_input}, {"dropout_flatten", c.dropout_flatten},
          {"dropout_head", c.dropout_head}, {"num_classes", c.num_classes},
          {"input_rows", c.input_rows}, {"input_cols", c.input_cols},
          {"metadata_size", c.metadata_size}};
}

inline NetworkConfig network_config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.conv_filters = j.at("conv_filters").get<std::array<std::size_t, 4>>();
  c.kernel = j.at("kernel");
  c.metadata_units = j.at("metadata_units");
  c.head_units = j.at("head_units");
  c.dropout_input = j.at("dropout_input");
  c.dropout_flatten = j.at("dropout_flatten");
  c.dropout_head = j.at("dropout_head");
  c.num_classes = j.at("num_classes");
  c.input_rows = j.at("input_rows");
  c.input_cols = j.at("input_cols");
  c.metadata_size = j.at("metadata_size");
  return c;
}

inline nlohmann::json to_json(const TrainingConfig& c) {
  return {{"batch_size", c.batch_size}, {"segment_samples", c.segment_samples}, {"fft_window", c.fft_window},
          {"lr", c.lr}, {"momentum", c.momentum}, {"epochs", c.epochs}, {"seed", c.seed},
          {"checkpoint_interval", c.checkpoint_interval}};
}

inline TrainingConfig training_config_from_json(const nlohmann::json& j) {
  TrainingConfig c;
  c.batch_size = j.at("batch_size");
  c.segment_samples = j.at("segment_samples");
  c.fft_window = j.at("fft_window");
  c.lr = j.at("lr");
  c.momentum = j.at("momentum");
  c.epochs = j.at("epochs");
  c.seed = j.at("seed");
  c.checkpoint_interval = j.at("checkpoint_interval");
  return c;
}

namespace detail {

inline nlohmann::json stats_set_json(const AttributeStatsSet& s) {
  auto a = nlohmann::json::array();
  for (const auto& st : s) a.push_back({st.mean, st.variance, st.count});
  return a;
}

inline AttributeStatsSet stats_set_from_json(const nlohmann::json& j) {
  AttributeStatsSet s{};
  if (j.size() != s.size()) throw CheckpointError("corrupt checkpoint: bad attribute stats");
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = {j[i].at(0).get<double>(), j[i].at(1).get<double>(), j[i].at(2).get<std::size_t>()};
  return s;
}

template <typename V>
void put(std::string& out, V v) {
  char buf[sizeof(V)];
  std::memcpy(buf, &v, sizeof(V));
  out.append(buf, sizeof(V));
}

struct Reader {
  std::string_view bytes;
  std::size_t pos = 0;

  template <typename V>
  V get() {
    if (bytes.size() - pos < sizeof(V)) throw CheckpointError("corrupt checkpoint: truncated");
    V v;
    std::memcpy(&v, bytes.data() + pos, sizeof(V));
    pos += sizeof(V);
    return v;
  }
  std::string_view take(std::size_t n) {
    if (bytes.size() - pos < n) throw CheckpointError("corrupt checkpoint: truncated");
    auto s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
};

inline void put_tensors(std::string& out, const std::vector<Tensor<float>>& ts) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ts.size()));
  for (const auto& t : ts) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
  }
}

inline std::vector<Tensor<float>> get_tensors(Reader& in, const NetworkConfig& config) {
  const auto shapes = param_shapes(config);
  if (in.get<std::uint32_t>() != shapes.size()) throw CheckpointError("corrupt checkpoint: tensor count");
  std::vector<Tensor<float>> ts;
  for (const auto& want : shapes) {
    std::vector<std::size_t> shape(in.get<std::uint32_t>());
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
    if (shape != want) throw CheckpointError("corrupt checkpoint: tensor shape disagrees with config");
    Tensor<float> t(shape);
    const auto raw = in.take(t.size() * sizeof(float));
    std::memcpy(t.data.data(), raw.data(), raw.size());
    ts.push_back(std::move(t));
  }
  return ts;
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& c) {
  nlohmann::json header = {{"network", to_json(c.params.config)},
                           {"training", to_json(c.training)},
                           {"epoch", c.epoch},
                           {"seed", c.seed}};
  auto species = nlohmann::json::array();
  for (const auto& s : c.stats.species) species.push_back(detail::stats_set_json(s));
  header["stats"] = {{"global", detail::stats_set_json(c.stats.global)}, {"species", species}};
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint64_t>(out, text.size());
  out += text;
  detail::put_tensors(out, c.params.weights);
  detail::put_tensors(out, c.params.velocity);
  return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  detail::Reader in{bytes};
  if (in.take(sizeof(kCheckpointMagic)) != std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic)))
    throw CheckpointError("corrupt checkpoint: bad magic");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const auto text = in.take(static_cast<std::size_t>(in.get<std::uint64_t>()));
  Checkpoint c;
  try {
    const auto header = nlohmann::json::parse(text);
    c.params.config = network_config_from_json(header.at("network"));
    c.params.config.validate();
    c.training = training_config_from_json(header.at("training"));
    c.epoch = header.at("epoch");
    c.seed = header.at("seed");
    c.stats.global = detail::stats_set_from_json(header.at("stats").at("global"));
    for (const auto& s : header.at("stats").at("species")) c.stats.species.push_back(detail::stats_set_from_json(s));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  c.params.weights = detail::get_tensors(in, c.params.config);
  c.params.velocity = detail::get_tensors(in, c.params.config);
  if (in.pos != bytes.size()) throw CheckpointError("corrupt checkpoint: trailing bytes");
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  const auto bytes = encode_checkpoint(c);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

/// Throws ConfigError unless `got` can stand in for `expected`.
inline void require_compatible(const NetworkConfig& expected, const NetworkConfig& got) {
  if (got.num_classes != expected.num_classes)
    throw ConfigError("config mismatch: checkpoint has " + std::to_string(got.num_classes) + " classes, expected " +
                      std::to_string(expected.num_classes));
  if (!(got == expected)) throw ConfigError("config mismatch: checkpoint network layout differs");
}

}  // namespace birdsong
