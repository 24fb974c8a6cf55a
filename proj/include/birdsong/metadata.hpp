#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string_view>
#include <vector>

#include "birdsong/common.hpp"
#include "birdsong/corpus.hpp"

namespace birdsong {

enum class Attribute { Latitude = 0, Longitude = 1, Elevation = 2, TimeOfDay = 3 };
inline constexpr std::size_t kNumAttributes = 4;

struct AttributeStats {
  double mean = 0.0;
  double variance = 0.0;
  std::size_t count = 0;
};

using AttributeStatsSet = std::array<AttributeStats, kNumAttributes>;

/// Per-species mean and population variance of each metadata attribute, with
/// corpus-wide values used wherever a species has no observations.
struct SpeciesAttributeStats {
  std::vector<AttributeStatsSet> species;
  AttributeStatsSet global{};

  /// Stats for `species_id`; out-of-range ids (e.g. unknown species at
  /// inference time) get the corpus-wide stats.
  const AttributeStats& get(int species_id, Attribute a) const {
    const auto i = static_cast<std::size_t>(a);
    if (species_id < 0 || static_cast<std::size_t>(species_id) >= species.size()) return global[i];
    return species[static_cast<std::size_t>(species_id)][i];
  }
};

inline constexpr int kGlobalStats = -1;

struct AttributeRange {
  double lo, hi;
};

/// Physical range of each attribute. Time of day stays strictly below 1440.
inline AttributeRange attribute_range(Attribute a) {
  switch (a) {
    case Attribute::Latitude: return {-90.0, 90.0};
    case Attribute::Longitude: return {-180.0, 180.0};
    case Attribute::Elevation: return {-500.0, 9000.0};
    case Attribute::TimeOfDay: return {0.0, 1440.0 - 1e-9};
  }
  return {0.0, 0.0};
}

/// Value that normalizes to 0.5; used when an attribute is missing corpus-wide.
inline double attribute_midpoint(Attribute a) {
  switch (a) {
    case Attribute::Latitude: return 0.0;
    case Attribute::Longitude: return 0.0;
    case Attribute::Elevation: return 2500.0;
    case Attribute::TimeOfDay: return 720.0;
  }
  return 0.0;
}

inline std::optional<double> attribute_value(const RecordingMetadata& md, Attribute a) {
  switch (a) {
    case Attribute::Latitude: return md.latitude;
    case Attribute::Longitude: return md.longitude;
    case Attribute::Elevation: return md.elevation;
    case Attribute::TimeOfDay: return md.time_of_day;
  }
  return std::nullopt;
}

namespace detail {

struct Moments {
  double sum = 0.0, sum_sq = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  AttributeStats finish() const {
    if (n == 0) return {};
    const double mean = sum / static_cast<double>(n);
    return {mean, std::max(0.0, sum_sq / static_cast<double>(n) - mean * mean), n};
  }
};

}  // namespace detail

inline SpeciesAttributeStats compute_species_stats(const CorpusManifest& m) {
  const auto n_species = static_cast<std::size_t>(std::max(0, m.num_species));
  std::vector<std::array<detail::Moments, kNumAttributes>> acc(n_species);
  std::array<detail::Moments, kNumAttributes> global_acc;
  for (const auto& e : m.entries) {
    for (std::size_t a = 0; a < kNumAttributes; ++a) {
      auto v = attribute_value(e.metadata, static_cast<Attribute>(a));
      if (!v) continue;
      global_acc[a].add(*v);
      if (static_cast<std::size_t>(e.species_id) < n_species) acc[static_cast<std::size_t>(e.species_id)][a].add(*v);
    }
  }
  SpeciesAttributeStats stats;
  for (std::size_t a = 0; a < kNumAttributes; ++a) {
    stats.global[a] = global_acc[a].finish();
    if (stats.global[a].count == 0) stats.global[a].mean = attribute_midpoint(static_cast<Attribute>(a));
  }
  stats.species.resize(n_species);
  for (std::size_t s = 0; s < n_species; ++s)
    for (std::size_t a = 0; a < kNumAttributes; ++a) {
      auto st = acc[s][a].finish();
      stats.species[s][a] = st.count == 0 ? AttributeStats{stats.global[a].mean, stats.global[a].variance, 0} : st;
    }
  return stats;
}

/// Normal draw from the species' attribute distribution, clamped to the physical range.
inline double impute_attribute(int species_id, Attribute a, const SpeciesAttributeStats& stats, RandomSource& rng) {
  const auto& st = stats.get(species_id, a);
  const auto range = attribute_range(a);
  return std::clamp(rng.normal(st.mean, std::sqrt(st.variance)), range.lo, range.hi);
}

// ---------------------------------------------------------------------------
// Sun position

struct SunEvents {
  enum class Kind { Normal, AllDayAbove, AllDayBelow };
  Kind kind = Kind::Normal;
  double rise_utc = 0.0;  // minutes after 00:00 UTC, [0, 1440)
  double set_utc = 0.0;
};

namespace detail {

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }
inline double wrap(double v, double period) {
  v = std::fmod(v, period);
  return v < 0.0 ? v + period : v;
}

/// Almanac approximation of the UTC time (hours) at which the sun centre
/// crosses `altitude` on day `n`. Returns the cos(hour angle) through
/// `cos_h` so callers can detect the always-above / always-below cases.
inline double almanac_event_hours(int n, double lat, double lon, double altitude, bool rising, double& cos_h) {
  const double lng_hour = lon / 15.0;
  const double t = n + ((rising ? 6.0 : 18.0) - lng_hour) / 24.0;
  const double mean_anomaly = 0.9856 * t - 3.289;
  const double true_long =
      wrap(mean_anomaly + 1.916 * std::sin(deg2rad(mean_anomaly)) + 0.020 * std::sin(deg2rad(2 * mean_anomaly)) + 282.634,
           360.0);
  double ra = wrap(rad2deg(std::atan(0.91764 * std::tan(deg2rad(true_long)))), 360.0);
  ra += std::floor(true_long / 90.0) * 90.0 - std::floor(ra / 90.0) * 90.0;
  ra /= 15.0;
  const double sin_dec = 0.39782 * std::sin(deg2rad(true_long));
  const double cos_dec = std::cos(std::asin(sin_dec));
  const double zenith = 90.0 - altitude;
  cos_h = (std::cos(deg2rad(zenith)) - sin_dec * std::sin(deg2rad(lat))) / (cos_dec * std::cos(deg2rad(lat)));
  if (!std::isfinite(cos_h)) cos_h = sin_dec * lat > 0 ? -2.0 : 2.0;
  if (cos_h > 1.0 || cos_h < -1.0) return 0.0;
  double h = rad2deg(std::acos(cos_h));
  if (rising) h = 360.0 - h;
  h /= 15.0;
  const double local_mean = h + ra - 0.06571 * t - 6.622;
  return wrap(local_mean - lng_hour, 24.0);
}

}  // namespace detail

/// Times at which the sun centre crosses `sun_altitude` degrees on `date` at
/// (lat, lon), using the almanac approximation. Elevation is ignored.
inline SunEvents sun_event_times(double lat, double lon, const Date& date, double sun_altitude) {
  const int n = day_of_year(date);
  SunEvents ev;
  double cos_rise = 0.0, cos_set = 0.0;
  const double rise = detail::almanac_event_hours(n, lat, lon, sun_altitude, true, cos_rise);
  const double set = detail::almanac_event_hours(n, lat, lon, sun_altitude, false, cos_set);
  for (double c : {cos_rise, cos_set}) {
    if (c > 1.0) ev.kind = SunEvents::Kind::AllDayBelow;
    else if (c < -1.0) ev.kind = SunEvents::Kind::AllDayAbove;
  }
  if (ev.kind == SunEvents::Kind::Normal) {
    ev.rise_utc = detail::wrap(rise * 60.0, 1440.0);
    ev.set_utc = detail::wrap(set * 60.0, 1440.0);
  }
  return ev;
}

// ---------------------------------------------------------------------------
// Day parts

enum class DayPart { Night1 = 0, Dawn = 1, Forenoon = 2, Afternoon = 3, Dusk = 4, Night2 = 5 };
inline constexpr std::size_t kNumDayParts = 6;

inline constexpr double kTwilightAltitude = -9.0;
inline constexpr double kDaylightAltitude = 4.0;

inline std::string_view day_part_name(DayPart p) {
  static constexpr std::string_view kNames[] = {"Night1", "Dawn", "Forenoon", "Afternoon", "Dusk", "Night2"};
  return kNames[static_cast<int>(p)];
}

/// Offset of the approximate local civil time from UTC, in minutes.
inline double local_time_offset(double lon) { return std::round(lon / 15.0) * 60.0; }

/// Boundaries b[0..6] in local minutes with b[0] = 0 and b[6] = 1440; day part
/// i covers [b[i], b[i+1]). Solar noon is the midpoint of the +4 degree events.
/// Missing events collapse their intervals (e.g. no night under a midnight sun).
inline std::array<double, kNumDayParts + 1> day_part_boundaries(double lat, double lon, const Date& date) {
  using Kind = SunEvents::Kind;
  const double tz = local_time_offset(lon);
  auto local = [&](double utc) { return detail::wrap(utc + tz, 1440.0); };
  const auto twilight = sun_event_times(lat, lon, date, kTwilightAltitude);
  const auto daylight = sun_event_times(lat, lon, date, kDaylightAltitude);

  double noon;
  auto midpoint = [&](const SunEvents& e) {
    double r = local(e.rise_utc), s = local(e.set_utc);
    if (s < r) s += 1440.0;
    return detail::wrap((r + s) / 2.0, 1440.0);
  };
  if (daylight.kind == Kind::Normal) noon = midpoint(daylight);
  else if (twilight.kind == Kind::Normal) noon = midpoint(twilight);
  else noon = local(detail::wrap(720.0 - 4.0 * lon, 1440.0));

  // Place an event within half a day of solar noon.
  auto around_noon = [&](double utc) {
    double v = local(utc);
    while (v <= noon - 720.0) v += 1440.0;
    while (v > noon + 720.0) v -= 1440.0;
    return v;
  };
  constexpr double kInf = std::numeric_limits<double>::infinity();

  double rise4 = noon, set4 = noon;
  if (daylight.kind == Kind::Normal) {
    rise4 = std::min(around_noon(daylight.rise_utc), noon);
    set4 = std::max(around_noon(daylight.set_utc), noon);
  } else if (daylight.kind == Kind::AllDayAbove) {
    rise4 = -kInf;
    set4 = kInf;
  }
  double rise9 = rise4, set9 = set4;
  if (twilight.kind == Kind::Normal) {
    rise9 = std::min(around_noon(twilight.rise_utc), rise4);
    set9 = std::max(around_noon(twilight.set_utc), set4);
  } else if (twilight.kind == Kind::AllDayAbove) {
    rise9 = -kInf;
    set9 = kInf;
  } else {
    rise9 = rise4 = set4 = set9 = noon;
  }

  std::array<double, kNumDayParts + 1> b{0.0, rise9, rise4, noon, set4, set9, 1440.0};
  for (std::size_t i = 1; i < b.size(); ++i) {
    b[i] = std::clamp(b[i], 0.0, 1440.0);
    b[i] = std::max(b[i], b[i - 1]);
  }
  return b;
}

/// Day part of `local_minutes` (local civil time approximated as UTC + round(lon / 15) h).
inline DayPart classify_day_part(double lat, double lon, const Date& date, double local_minutes) {
  const auto b = day_part_boundaries(lat, lon, date);
  const double t = detail::wrap(local_minutes, 1440.0);
  for (std::size_t i = 0; i < kNumDayParts; ++i)
    if (t >= b[i] && t < b[i + 1]) return static_cast<DayPart>(i);
  return DayPart::Night2;
}

// ---------------------------------------------------------------------------
// Feature vector

inline constexpr std::size_t kMetadataSize = 7;
inline constexpr double kMaxElevation = 5000.0;
/// Date assumed when a recording has a time of day but no date (March equinox).
inline constexpr Date kFallbackDate{2017, 3, 20};

/// [coords_available, lat, lon, elevation_available, elevation, daypart_available, daypart],
/// every entry in [0, 1].
struct MetadataVector {
  std::array<double, kMetadataSize> v{};

  bool operator==(const MetadataVector&) const = default;
};

/// Builds the feature vector. Missing values are drawn from the stats of
/// `stats_species` (the recording's own species unless overridden, e.g. with
/// kGlobalStats at inference time); their availability flag stays 0.
inline MetadataVector metadata_vector(const RecordingMetadata& md, const SpeciesAttributeStats& stats, RandomSource& rng,
                                      std::optional<int> stats_species = std::nullopt) {
  const int sp = stats_species.value_or(md.species_id);
  auto value = [&](Attribute a) {
    auto v = attribute_value(md, a);
    return v ? *v : impute_attribute(sp, a, stats, rng);
  };
  const double lat = value(Attribute::Latitude);
  const double lon = value(Attribute::Longitude);
  const double elev = value(Attribute::Elevation);
  const double time = value(Attribute::TimeOfDay);
  const DayPart part = classify_day_part(lat, lon, md.date.value_or(kFallbackDate), time);

  MetadataVector out;
  out.v[0] = md.has_coordinates() ? 1.0 : 0.0;
  out.v[1] = std::clamp((lat + 90.0) / 180.0, 0.0, 1.0);
  out.v[2] = std::clamp((lon + 180.0) / 360.0, 0.0, 1.0);
  out.v[3] = md.elevation ? 1.0 : 0.0;
  out.v[4] = std::clamp(elev, 0.0, kMaxElevation) / kMaxElevation;
  out.v[5] = md.time_of_day ? 1.0 : 0.0;
  out.v[6] = static_cast<double>(static_cast<int>(part)) / 5.0;
  return out;
}

}  // namespace birdsong
