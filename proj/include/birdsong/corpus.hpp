#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "birdsong/common.hpp"
#include "birdsong/text.hpp"

namespace birdsong {

struct Date {
  int year = 2000;
  int month = 1;
  int day = 1;

  bool operator==(const Date&) const = default;
};

inline bool is_leap_year(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

inline int days_in_month(int y, int m) {
  static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return (m == 2 && is_leap_year(y)) ? 29 : kDays[m - 1];
}

inline bool is_valid_date(const Date& d) {
  return d.month >= 1 && d.month <= 12 && d.day >= 1 && d.day <= days_in_month(d.year, d.month);
}

/// 1-based ordinal day within the year.
inline int day_of_year(const Date& d) {
  int n = d.day;
  for (int m = 1; m < d.month; ++m) n += days_in_month(d.year, m);
  return n;
}

struct RecordingMetadata {
  int species_id = 0;
  std::optional<double> latitude;   // degrees, [-90, 90]
  std::optional<double> longitude;  // degrees, [-180, 180]
  std::optional<double> elevation;  // meters
  std::optional<Date> date;
  std::optional<double> time_of_day;  // minutes since midnight, [0, 1440)

  bool has_coordinates() const { return latitude.has_value() && longitude.has_value(); }
};

/// Mono audio. Samples lie in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  double sample_rate = 22050.0;

  std::size_t size() const noexcept { return samples.size(); }
};

struct ManifestEntry {
  std::string recording_id;
  std::string audio_path;
  int species_id = 0;
  RecordingMetadata metadata;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  int num_species = 0;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }
};

inline constexpr std::string_view kManifestHeader =
    "recording_id,audio_path,species_id,latitude,longitude,elevation,date,time";

namespace detail {

inline Date parse_date(std::string_view s, std::size_t line) {
  auto parts = text::split(s, '-');
  if (parts.size() != 3 || parts[0].size() != 4 || parts[1].size() != 2 || parts[2].size() != 2)
    throw ParseError("invalid date '" + std::string(s) + "' (expected YYYY-MM-DD)", line);
  Date d{text::require_number<int>(parts[0], "date", line), text::require_number<int>(parts[1], "date", line),
         text::require_number<int>(parts[2], "date", line)};
  if (!is_valid_date(d)) throw ValidationError("line " + std::to_string(line) + ": date out of range '" + std::string(s) + "'");
  return d;
}

inline double parse_time(std::string_view s, std::size_t line) {
  auto parts = text::split(s, ':');
  if (parts.size() != 2 || parts[1].size() != 2)
    throw ParseError("invalid time '" + std::string(s) + "' (expected HH:MM)", line);
  int h = text::require_number<int>(parts[0], "time", line);
  int m = text::require_number<int>(parts[1], "time", line);
  if (h < 0 || h > 23 || m < 0 || m > 59)
    throw ValidationError("line " + std::to_string(line) + ": time out of range '" + std::string(s) + "'");
  return h * 60.0 + m;
}

inline std::optional<double> parse_bounded(std::string_view s, std::string_view field, double lo, double hi,
                                           std::size_t line) {
  if (text::trim(s).empty()) return std::nullopt;
  double v = text::require_number<double>(s, field, line);
  if (!(v >= lo && v <= hi))
    throw ValidationError("line " + std::to_string(line) + ": " + std::string(field) + " " + text::format_real(v) +
                          " out of range [" + text::format_real(lo) + ", " + text::format_real(hi) + "]");
  return v;
}

}  // namespace detail

/// Checks manifest invariants: unique ids, non-empty paths, contiguous species ids.
inline void validate_manifest(CorpusManifest& m) {
  std::unordered_set<std::string> ids;
  std::set<int> species;
  for (const auto& e : m.entries) {
    if (!ids.insert(e.recording_id).second) throw ValidationError("duplicate recording_id '" + e.recording_id + "'");
    if (e.audio_path.empty()) throw ValidationError("empty audio_path for '" + e.recording_id + "'");
    if (e.species_id < 0) throw ValidationError("negative species id for '" + e.recording_id + "'");
    species.insert(e.species_id);
  }
  if (species.empty()) {
    m.num_species = 0;
    return;
  }
  if (*species.rbegin() + 1 != static_cast<int>(species.size())) throw ValidationError("non-contiguous species ids");
  m.num_species = static_cast<int>(species.size());
}

/// Parses manifest CSV text. Relative audio paths are resolved against `base_dir`.
inline CorpusManifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir = {}) {
  CorpusManifest m;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (text::trim(line).empty()) continue;
    if (!header_seen) {
      if (text::trim(line) != kManifestHeader) throw ParseError("unexpected manifest header", lineno);
      header_seen = true;
      continue;
    }
    auto f = text::split(line);
    if (f.size() != 8) throw ParseError("expected 8 fields, got " + std::to_string(f.size()), lineno);
    ManifestEntry e;
    e.recording_id = std::string(f[0]);
    if (e.recording_id.empty()) throw ParseError("empty recording_id", lineno);
    std::filesystem::path audio{std::string(f[1])};
    if (!audio.empty() && audio.is_relative() && !base_dir.empty()) audio = base_dir / audio;
    e.audio_path = audio.string();
    e.species_id = text::require_number<int>(f[2], "species_id", lineno);
    if (e.species_id < 0) throw ValidationError("line " + std::to_string(lineno) + ": negative species_id");
    auto& md = e.metadata;
    md.species_id = e.species_id;
    md.latitude = detail::parse_bounded(f[3], "latitude", -90.0, 90.0, lineno);
    md.longitude = detail::parse_bounded(f[4], "longitude", -180.0, 180.0, lineno);
    md.elevation = detail::parse_bounded(f[5], "elevation", -500.0, 9000.0, lineno);
    if (!f[6].empty()) md.date = detail::parse_date(f[6], lineno);
    if (!f[7].empty()) md.time_of_day = detail::parse_time(f[7], lineno);
    m.entries.push_back(std::move(e));
  }
  if (!header_seen) throw ParseError("empty manifest");
  validate_manifest(m);
  return m;
}

inline CorpusManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest '" + path.string() + "'");
  return parse_manifest(in, path.parent_path());
}

inline std::string format_time_of_day(double minutes) {
  int m = static_cast<int>(minutes);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d:%02d", m / 60, m % 60);
  return buf;
}

inline void write_manifest(std::ostream& out, const CorpusManifest& m) {
  out << kManifestHeader << '\n';
  for (const auto& e : m.entries) {
    const auto& md = e.metadata;
    out << e.recording_id << ',' << e.audio_path << ',' << e.species_id << ',';
    if (md.latitude) out << text::format_real(*md.latitude);
    out << ',';
    if (md.longitude) out << text::format_real(*md.longitude);
    out << ',';
    if (md.elevation) out << text::format_real(*md.elevation);
    out << ',';
    if (md.date) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", md.date->year, md.date->month, md.date->day);
      out << buf;
    }
    out << ',';
    if (md.time_of_day) out << format_time_of_day(*md.time_of_day);
    out << '\n';
  }
}

/// For every recording, the species other than its own that have a recording
/// inside the axis-aligned box |dlat| <= 1 deg, |dlon| <= 1 deg.
class NeighborIndex {
 public:
  const std::vector<int>& neighbors(const std::string& recording_id) const {
    static const std::vector<int> kEmpty;
    auto it = map_.find(recording_id);
    return it == map_.end() ? kEmpty : it->second;
  }
  const std::map<std::string, std::vector<int>>& entries() const noexcept { return map_; }
  void set(const std::string& id, std::vector<int> species) { map_[id] = std::move(species); }

  bool operator==(const NeighborIndex&) const = default;

 private:
  std::map<std::string, std::vector<int>> map_;
};

inline constexpr double kNeighborBoxDegrees = 1.0;

inline NeighborIndex build_neighbor_index(const CorpusManifest& m) {
  // Bucket by 1-degree cells; any pair within the box lies in adjacent cells.
  std::map<std::pair<long, long>, std::vector<std::size_t>> cells;
  auto cell_of = [](double v) { return static_cast<long>(std::floor(v / kNeighborBoxDegrees)); };
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& md = m.entries[i].metadata;
    if (md.has_coordinates()) cells[{cell_of(*md.latitude), cell_of(*md.longitude)}].push_back(i);
  }
  NeighborIndex index;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& a = m.entries[i];
    std::set<int> found;
    if (a.metadata.has_coordinates()) {
      double lat = *a.metadata.latitude, lon = *a.metadata.longitude;
      long cy = cell_of(lat), cx = cell_of(lon);
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          auto it = cells.find({cy + dy, cx + dx});
          if (it == cells.end()) continue;
          for (std::size_t j : it->second) {
            const auto& b = m.entries[j];
            if (b.species_id == a.species_id) continue;
            if (std::abs(*b.metadata.latitude - lat) <= kNeighborBoxDegrees &&
                std::abs(*b.metadata.longitude - lon) <= kNeighborBoxDegrees)
              found.insert(b.species_id);
          }
        }
    }
    index.set(a.recording_id, std::vector<int>(found.begin(), found.end()));
  }
  return index;
}

/// Stratified, seeded train/validation partition. Each species keeps at least
/// one training recording; entry order is preserved in both halves.
inline std::pair<CorpusManifest, CorpusManifest> split_train_val(const CorpusManifest& m, double val_fraction,
                                                                 std::uint64_t seed) {
  if (m.empty()) throw ValidationError("cannot split an empty manifest");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ValidationError("val_fraction must lie in [0, 1)");

  std::map<int, std::vector<std::size_t>> by_species;
  for (std::size_t i = 0; i < m.entries.size(); ++i) by_species[m.entries[i].species_id].push_back(i);

  const auto target = static_cast<long>(std::llround(val_fraction * static_cast<double>(m.size())));
  std::map<int, long> quota;
  std::vector<std::pair<double, int>> remainders;
  long assigned = 0;
  for (const auto& [s, idx] : by_species) {
    double exact = val_fraction * static_cast<double>(idx.size());
    long cap = static_cast<long>(idx.size()) - 1;
    long q = std::min(static_cast<long>(std::floor(exact)), cap);
    quota[s] = q;
    assigned += q;
    remainders.emplace_back(exact - std::floor(exact), s);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (bool progress = true; assigned < target && progress;) {
    progress = false;
    for (const auto& [frac, s] : remainders) {
      if (assigned >= target) break;
      if (quota[s] < static_cast<long>(by_species[s].size()) - 1) {
        ++quota[s];
        ++assigned;
        progress = true;
      }
    }
  }

  RandomSource rng(seed);
  std::vector<bool> is_val(m.size(), false);
  for (auto& [s, idx] : by_species) {
    auto shuffled = idx;
    std::shuffle(shuffled.begin(), shuffled.end(), rng.engine());
    for (long k = 0; k < quota[s]; ++k) is_val[shuffled[static_cast<std::size_t>(k)]] = true;
  }

  CorpusManifest train, val;
  train.num_species = val.num_species = m.num_species;
  for (std::size_t i = 0; i < m.entries.size(); ++i) (is_val[i] ? val : train).entries.push_back(m.entries[i]);
  if (train.empty()) throw ValidationError("val_fraction produces an empty training split");
  return {std::move(train), std::move(val)};
}

}  // namespace birdsong
