#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "birdsong/corpus.hpp"
#include "oracles.hpp"

using namespace birdsong;

namespace {

CorpusManifest parse(const std::string& body) {
  std::istringstream in(std::string(kManifestHeader) + "\n" + body);
  return parse_manifest(in);
}

ManifestEntry entry(std::string id, int species, std::optional<double> lat, std::optional<double> lon) {
  ManifestEntry e;
  e.recording_id = std::move(id);
  e.audio_path = e.recording_id + ".wav";
  e.species_id = species;
  e.metadata.species_id = species;
  e.metadata.latitude = lat;
  e.metadata.longitude = lon;
  return e;
}

}  // namespace

TEST(Manifest, ParsesThreeEntries) {
  auto m = parse("a,a.wav,0,47.5,16.2,300,2017-05-04,06:30\nb,b.wav,1,,,,,\nc,c.wav,1,10,20,,2016-02-29,\n");
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m.num_species, 2);
  EXPECT_DOUBLE_EQ(*m.entries[0].metadata.latitude, 47.5);
  EXPECT_DOUBLE_EQ(*m.entries[0].metadata.time_of_day, 390.0);
  EXPECT_EQ(m.entries[0].metadata.date->day, 4);
  EXPECT_FALSE(m.entries[1].metadata.latitude.has_value());
  EXPECT_FALSE(m.entries[1].metadata.date.has_value());
  EXPECT_TRUE(m.entries[2].metadata.date.has_value());
}

TEST(Manifest, LatitudeOutOfRangeNamesField) {
  try {
    parse("a,a.wav,0,95.0,0,,,\n");
    FAIL() << "expected a range error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("latitude"), std::string::npos);
  }
}

TEST(Manifest, SpeciesGapRejected) {
  try {
    parse("a,a.wav,0,,,,,\nb,b.wav,2,,,,,\n");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("non-contiguous species ids"), std::string::npos);
  }
}

TEST(Manifest, ParseErrorsCarryLineNumber) {
  try {
    parse("a,a.wav,0,,,,,\nb,b.wav,zero,,,,,\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(parse("a,a.wav,0,,,,\n"), ParseError);
  EXPECT_THROW(parse("a,a.wav,0,,,,2017-02-30,\n"), ValidationError);
  EXPECT_THROW(parse("a,a.wav,0,,,,,24:00\n"), ValidationError);
  EXPECT_THROW(parse("a,a.wav,0,,,,,\na,b.wav,0,,,,,\n"), ValidationError);
  std::istringstream bad_header("id,path\n");
  EXPECT_THROW(parse_manifest(bad_header), ParseError);
}

TEST(Manifest, RelativePathsResolveAgainstManifestDirectory) {
  auto dir = std::filesystem::temp_directory_path() / "birdsong_manifest_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "m.csv");
    out << kManifestHeader << "\nx,audio/x.wav,0,,,,,\n";
  }
  auto m = load_manifest(dir / "m.csv");
  EXPECT_EQ(std::filesystem::path(m.entries[0].audio_path), dir / "audio/x.wav");
  std::filesystem::remove_all(dir);
}

TEST(Manifest, WriteThenParseIsStable) {
  auto m = parse("a,a.wav,0,47.5,16.25,300,2017-05-04,06:30\nb,b.wav,1,,,,,\n");
  std::ostringstream out;
  write_manifest(out, m);
  std::istringstream in(out.str());
  auto again = parse_manifest(in);
  std::ostringstream out2;
  write_manifest(out2, again);
  EXPECT_EQ(out.str(), out2.str());
}

TEST(NeighborIndex, IdenticalCoordinatesAreNeighbors) {
  CorpusManifest m;
  m.entries = {entry("a", 0, 10.0, 20.0), entry("b", 1, 10.0, 20.0)};
  validate_manifest(m);
  auto idx = build_neighbor_index(m);
  EXPECT_EQ(idx.neighbors("a"), std::vector<int>{1});
  EXPECT_EQ(idx.neighbors("b"), std::vector<int>{0});
}

TEST(NeighborIndex, OutsideBoxAndMissingCoordinates) {
  CorpusManifest m;
  m.entries = {entry("a", 0, 10.0, 20.0), entry("b", 1, 11.5, 20.0), entry("c", 1, std::nullopt, std::nullopt),
               entry("d", 0, 11.0, 21.0)};
  validate_manifest(m);
  auto idx = build_neighbor_index(m);
  EXPECT_TRUE(idx.neighbors("a").empty());
  EXPECT_TRUE(idx.neighbors("c").empty());
  EXPECT_EQ(idx.neighbors("b"), std::vector<int>{0});  // d is within 0.5 / 1.0
}

TEST(NeighborIndex, MatchesBruteForceAndIsSymmetric) {
  RandomSource rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    CorpusManifest m;
    for (int i = 0; i < 50; ++i) {
      std::optional<double> lat, lon;
      if (rng.bernoulli(0.85)) {
        lat = std::round(rng.uniform(-3.0, 3.0) * 4) / 4;  // quarter-degree grid hits the box edge often
        lon = std::round(rng.uniform(-3.0, 3.0) * 4) / 4;
      }
      m.entries.push_back(entry("r" + std::to_string(i), i % 5, lat, lon));
    }
    validate_manifest(m);
    auto idx = build_neighbor_index(m);
    auto brute = oracle::neighbors(m);
    for (const auto& e : m.entries) {
      const auto& got = idx.neighbors(e.recording_id);
      EXPECT_EQ(std::set<int>(got.begin(), got.end()), brute[e.recording_id]);
    }
    for (const auto& a : m.entries)
      for (const auto& b : m.entries) {
        if (!a.metadata.has_coordinates() || !b.metadata.has_coordinates() || a.species_id == b.species_id) continue;
        if (std::abs(*a.metadata.latitude - *b.metadata.latitude) > 1.0 ||
            std::abs(*a.metadata.longitude - *b.metadata.longitude) > 1.0)
          continue;
        const auto& na = idx.neighbors(a.recording_id);
        const auto& nb = idx.neighbors(b.recording_id);
        EXPECT_TRUE(std::count(na.begin(), na.end(), b.species_id));
        EXPECT_TRUE(std::count(nb.begin(), nb.end(), a.species_id));
      }
  }
}

TEST(Split, NinetyTenDisjoint) {
  CorpusManifest m;
  for (int i = 0; i < 100; ++i) m.entries.push_back(entry("r" + std::to_string(i), i % 4, std::nullopt, std::nullopt));
  validate_manifest(m);
  auto [train, val] = split_train_val(m, 0.1, 3);
  EXPECT_EQ(train.size(), 90u);
  EXPECT_EQ(val.size(), 10u);
  std::set<std::string> ids;
  for (auto& e : train.entries) ids.insert(e.recording_id);
  for (auto& e : val.entries) EXPECT_TRUE(ids.insert(e.recording_id).second);
  EXPECT_EQ(ids.size(), 100u);
  std::map<int, int> per_species;
  for (auto& e : val.entries) ++per_species[e.species_id];
  for (auto& [s, n] : per_species) EXPECT_GE(n, 2);  // stratified: 25 per class -> 2 or 3 each
}

TEST(Split, ZeroFractionIsIdentityAndSeedDeterministic) {
  CorpusManifest m;
  for (int i = 0; i < 30; ++i) m.entries.push_back(entry("r" + std::to_string(i), i % 3, std::nullopt, std::nullopt));
  validate_manifest(m);
  auto [train, val] = split_train_val(m, 0.0, 1);
  EXPECT_EQ(train.size(), 30u);
  EXPECT_TRUE(val.empty());
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(train.entries[i].recording_id, m.entries[i].recording_id);

  auto a = split_train_val(m, 0.3, 99);
  auto b = split_train_val(m, 0.3, 99);
  ASSERT_EQ(a.second.size(), b.second.size());
  for (std::size_t i = 0; i < a.second.size(); ++i)
    EXPECT_EQ(a.second.entries[i].recording_id, b.second.entries[i].recording_id);
}

TEST(Split, KeepsOneTrainingRecordingPerSpecies) {
  CorpusManifest m;
  m.entries = {entry("a", 0, std::nullopt, std::nullopt), entry("b", 1, std::nullopt, std::nullopt),
               entry("c", 1, std::nullopt, std::nullopt)};
  validate_manifest(m);
  auto [train, val] = split_train_val(m, 0.9, 5);
  EXPECT_EQ(val.size(), 1u);
  EXPECT_EQ(train.size(), 2u);
  EXPECT_THROW(split_train_val(m, 1.0, 5), ValidationError);
  EXPECT_THROW(split_train_val(CorpusManifest{}, 0.1, 5), ValidationError);
}
