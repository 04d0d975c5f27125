#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <string>

#include "helpers.hpp"
#include "streetcam/error.hpp"
#include "streetcam/ingest.hpp"

using namespace streetcam;
using namespace streetcam::ingest;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string square(double lat0, double lon0, double lat1, double lon1) {
  return "[[[" + std::to_string(lon0) + "," + std::to_string(lat0) + "],[" + std::to_string(lon1) + "," +
         std::to_string(lat0) + "],[" + std::to_string(lon1) + "," + std::to_string(lat1) + "],[" +
         std::to_string(lon0) + "," + std::to_string(lat1) + "],[" + std::to_string(lon0) + "," +
         std::to_string(lat0) + "]]]";
}

std::string fc(const std::string& features) {
  return R"({"type":"FeatureCollection","features":[)" + features + "]}";
}

std::string polygon_feature(const std::string& coords, const std::string& props = "{}") {
  return R"({"type":"Feature","properties":)" + props + R"(,"geometry":{"type":"Polygon","coordinates":)" +
         coords + "}}";
}

// A city about 2.2 km across centred on (0, 0).
struct TinyCity {
  testing::TempDir dir{"ingest"};
  CityFiles files;

  TinyCity() {
    files.boundary = dir / "boundary.geojson";
    files.roads = dir / "roads.geojson";
    files.footprints = dir / "footprints.geojson";
    files.parcels = dir / "parcels.geojson";
    files.blockgroups = dir / "blockgroups.geojson";
    files.zone_mapping = dir / "zones.txt";
    write(files.boundary, fc(polygon_feature(square(-0.01, -0.01, 0.01, 0.01))));
    write(files.roads, fc(
        R"({"type":"Feature","properties":{"id":"main"},"geometry":{"type":"LineString","coordinates":[[-0.02,0],[0.02,0]]}},)"
        R"({"type":"Feature","properties":{},"geometry":{"type":"MultiLineString","coordinates":[[[0,-0.005],[0,0.005]],[[0.5,0.5],[0.6,0.6]]]}})"));
    write(files.footprints, fc(polygon_feature(square(0.001, 0.001, 0.0012, 0.0012)) + "," +
                               polygon_feature(square(0.5, 0.5, 0.5002, 0.5002))));
    write(files.parcels, fc(polygon_feature(square(0.0, 0.0, 0.005, 0.005), R"({"zoning":"RH-1"})") + "," +
                            polygon_feature(square(-0.005, -0.005, 0.0, 0.0), R"({"zoning":"M-2"})")));
    write(files.blockgroups,
          fc(polygon_feature(square(-0.01, -0.01, 0.01, 0.01), R"({"id":"060750101001","minority_share":0.4})")));
    write(files.zone_mapping, "# code category\nRH* residential\nM-2\tindustrial\nC-3 commercial\n");
  }
};

}  // namespace

TEST_CASE("zone mapping prefers exact codes then the longest prefix") {
  const auto m = ZoneMapping::parse("R* residential\nRM* mixed\nRM-1 commercial\nP public\n");
  CHECK(m.size() == 4);
  CHECK(m.standardize("RM-1") == ZoneCategory::commercial);
  CHECK(m.standardize("RM-2") == ZoneCategory::mixed);
  CHECK(m.standardize("RH-1") == ZoneCategory::residential);
  CHECK(m.standardize(" P ") == ZoneCategory::public_);
  CHECK(m.standardize("X") == ZoneCategory::unknown);
  CHECK(m.standardize("") == ZoneCategory::unknown);
  CHECK(parse_zone("public") == ZoneCategory::public_);
  CHECK_FALSE(parse_zone("farm").has_value());
}

TEST_CASE("zone mapping errors carry the line number") {
  CHECK_THROWS_WITH(ZoneMapping::parse("A residential\nB farmland\n", "z.txt"),
                    ContainsSubstring("z.txt:2") && ContainsSubstring("farmland"));
  CHECK_THROWS_AS(ZoneMapping::parse("lonely\n"), DataError);
}

TEST_CASE("load_city projects, clips and filters every layer") {
  TinyCity t;
  const auto b = load_city("tiny", t.files);
  CHECK(b.city == "tiny");
  CHECK(b.origin.lat == Approx(0.0).margin(1e-9));
  CHECK(b.origin.lon == Approx(0.0).margin(1e-9));
  REQUIRE(b.boundary.size() == 1);
  CHECK_FALSE(b.impute_coverage);

  // The east-west road is cut to the 0.02 degree wide boundary; the second
  // part of the multi-line lies far outside and disappears.
  const double deg = geo::kEarthRadiusM * std::numbers::pi / 180.0;
  CHECK(b.roads.total_length_m() == Approx(0.02 * deg + 0.01 * deg).epsilon(1e-6));
  REQUIRE(b.roads.segments.size() == 2);
  for (std::size_t i = 0; i < b.roads.segments.size(); ++i) CHECK(b.roads.segments[i].id == i);

  CHECK(b.footprints.size() == 1);
  REQUIRE(b.parcels.size() == 2);
  CHECK(b.parcels[0].zone_code == "RH-1");
  CHECK(b.parcels[0].zone == ZoneCategory::residential);
  CHECK(b.parcels[1].zone == ZoneCategory::industrial);
  REQUIRE(b.blockgroups.size() == 1);
  CHECK(b.blockgroups[0].geoid == "060750101001");
  CHECK(b.blockgroups[0].minority_share == Approx(0.4));
}

TEST_CASE("a city without footprints is flagged for imputation") {
  TinyCity t;
  t.files.footprints.clear();
  CHECK(load_city("tiny", t.files).impute_coverage);
}

TEST_CASE("load errors name the file and feature") {
  TinyCity t;
  SECTION("missing file") {
    t.files.parcels = t.dir / "nope.geojson";
    CHECK_THROWS_WITH(load_city("x", t.files), ContainsSubstring("nope.geojson"));
  }
  SECTION("bad minority share") {
    write(t.files.blockgroups,
          fc(polygon_feature(square(0, 0, 0.001, 0.001), R"({"minority_share":0.1})") + "," +
             polygon_feature(square(0, 0, 0.001, 0.001), R"({"minority_share":1.7})")));
    CHECK_THROWS_WITH(load_city("x", t.files),
                      ContainsSubstring("blockgroups.geojson") && ContainsSubstring("feature 1"));
  }
  SECTION("degenerate road") {
    write(t.files.roads, fc(R"({"type":"Feature","properties":{},"geometry":{"type":"LineString","coordinates":[[0,0]]}})"));
    CHECK_THROWS_WITH(load_city("x", t.files),
                      ContainsSubstring("roads.geojson") && ContainsSubstring("feature 0"));
  }
  SECTION("not json") {
    write(t.files.roads, "{oops");
    CHECK_THROWS_AS(load_city("x", t.files), DataError);
  }
}

TEST_CASE("parse_feature_collection keeps properties and geometry") {
  const auto feats = parse_feature_collection(
      fc(R"({"type":"Feature","properties":{"id":"a","n":3},"geometry":{"type":"MultiPolygon","coordinates":[)" +
         square(0, 0, 1, 1).substr(0) + "," + square(2, 2, 3, 3) + "]}}"),
      "mem");
  REQUIRE(feats.size() == 1);
  CHECK(feats[0].id == "a");
  CHECK(feats[0].number_props.at("n") == 3.0);
  CHECK(feats[0].polygons.size() == 2);
  CHECK(feats[0].polygons[0][0].size() == 5);
  CHECK_THROWS_AS(parse_feature_collection(R"({"type":"Feature"})", "mem"), DataError);
}

TEST_CASE("bundle files round trip") {
  TinyCity t;
  const auto b = load_city("tiny", t.files);
  save_bundle(b, t.dir / "tiny.bundle");
  const auto r = load_bundle(t.dir / "tiny.bundle");
  CHECK(r.city == b.city);
  CHECK(r.roads.total_length_m() == b.roads.total_length_m());
  REQUIRE(r.roads.segments.size() == b.roads.segments.size());
  CHECK(r.roads.segments[0].line.vertices() == b.roads.segments[0].line.vertices());
  CHECK(r.footprints.size() == b.footprints.size());
  CHECK(r.parcels[1].zone == b.parcels[1].zone);
  CHECK(r.blockgroups[0].minority_share == b.blockgroups[0].minority_share);
  CHECK(r.impute_coverage == b.impute_coverage);

  write(t.dir / "junk.bundle", "not a bundle at all");
  CHECK_THROWS_AS(load_bundle(t.dir / "junk.bundle"), DataError);
}
