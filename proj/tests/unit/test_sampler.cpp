#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "streetcam/error.hpp"
#include "streetcam/sampler.hpp"

using namespace streetcam;
using namespace streetcam::sampler;
using Catch::Approx;

namespace {

// Twenty parallel segments with lengths 10, 20, ..., 200 m; a few bend.
ingest::RoadNetwork twenty_segments() {
  ingest::RoadNetwork net;
  for (std::uint32_t i = 0; i < 20; ++i) {
    const double len = 10.0 * (i + 1);
    const double y = 50.0 * i;
    std::vector<geo::LocalPoint> v;
    if (i % 3 == 0) {
      v = {{0, y}, {len / 2, y}, {len / 2, y + len / 2}};
    } else {
      v = {{0, y}, {len, y}};
    }
    net.segments.push_back({i, "s" + std::to_string(i), geo::Polyline(v)});
  }
  return net;
}

const geo::Projection kProj({37.77, -122.42});

}  // namespace

TEST_CASE("sampling is deterministic for a fixed seed and stream") {
  const auto net = twenty_segments();
  const auto a = sample_points(net, kProj, 500, 7, "sf");
  const auto b = sample_points(net, kProj, 500, 7, "sf");
  const auto c = sample_points(net, kProj, 500, 8, "sf");
  const auto d = sample_points(net, kProj, 500, 7, "oakland");
  REQUIRE(a.size() == 500);
  std::string ja, jb, jc, jd;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ja += to_jsonl(a[i]);
    jb += to_jsonl(b[i]);
    jc += to_jsonl(c[i]);
    jd += to_jsonl(d[i]);
  }
  CHECK(ja == jb);
  CHECK(ja != jc);
  CHECK(ja != jd);
}

TEST_CASE("segment choice is proportional to length") {
  const auto net = twenty_segments();
  const std::size_t n = 100000;
  const auto pts = sample_points(net, kProj, n, 2024);
  std::vector<double> counts(20, 0.0);
  for (const auto& p : pts) counts[p.segment] += 1;
  const double total = net.total_length_m();
  double chi2 = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const double expect = n * net.segments[i].line.length() / total;
    chi2 += (counts[i] - expect) * (counts[i] - expect) / expect;
  }
  // 19 degrees of freedom: 43.82 is the 0.999 quantile.
  CHECK(chi2 < 43.82);
}

TEST_CASE("points lie on their segment with a consistent heading") {
  const auto net = twenty_segments();
  const auto pts = sample_points(net, kProj, 4000, 3);
  std::size_t right = 0;
  for (const auto& p : pts) {
    const auto& line = net.segments.at(p.segment).line;
    REQUIRE(geo::nearest_point_on_polyline(p.location, line).distance < 1e-9);
    const double expected = p.side == Side::right ? p.road_bearing + 90.0 : p.road_bearing - 90.0;
    REQUIRE(geo::angular_difference(p.view_heading, expected) < 1e-9);
    REQUIRE(p.status == Status::pending);
    const auto back = kProj.project(p.geo);
    REQUIRE(geo::distance(back, p.location) < 1e-6);
    right += p.side == Side::right;
  }
  // Fair coin: sd of the count is sqrt(4000) / 2 ~ 31.6.
  CHECK(std::abs(static_cast<double>(right) - 2000.0) < 4 * 31.7);
}

TEST_CASE("empty networks and zero counts are data errors") {
  ingest::RoadNetwork empty;
  CHECK_THROWS_AS(RoadSampler(empty, kProj), DataError);
  CHECK_THROWS_AS(sample_points(twenty_segments(), kProj, 0, 1), DataError);
}

TEST_CASE("unavailable points are replaced by fresh draws") {
  const auto net = twenty_segments();
  const RoadSampler sampler(net, kProj);
  auto pts = sample_points(net, kProj, 300, 5);
  // Imagery exists only on even segments.
  const AvailabilityOracle oracle = [](const SamplePoint& p) -> std::optional<Capture> {
    if (p.segment % 2) return std::nullopt;
    return Capture{p.location, "pano-" + std::to_string(p.id), "2019-05"};
  };
  Rng rng(99);
  const auto res = apply_availability(pts, oracle, sampler, rng);
  REQUIRE(res.points.size() == 300);
  CHECK(res.draws == 300 + res.rejected);
  CHECK(res.rejected > 0);
  std::set<std::uint64_t> ids;
  for (const auto& p : res.points) {
    REQUIRE(p.segment % 2 == 0);
    REQUIRE(p.capture.has_value());
    ids.insert(p.id);
  }
  CHECK(ids.size() == 300);
}

TEST_CASE("availability stops at the draw cap") {
  const auto net = twenty_segments();
  const RoadSampler sampler(net, kProj);
  auto pts = sample_points(net, kProj, 10, 5);
  const AvailabilityOracle none = [](const SamplePoint&) -> std::optional<Capture> { return std::nullopt; };
  Rng rng(1);
  CHECK_THROWS_AS(apply_availability(pts, none, sampler, rng), DataError);
  Rng rng2(1);
  CHECK_THROWS_AS(apply_availability(pts, none, sampler, rng2, 25), DataError);
}

TEST_CASE("sample files round trip") {
  const auto net = twenty_segments();
  auto pts = sample_points(net, kProj, 50, 11);
  pts[3].capture = Capture{{1.5, 2.5}, "abc", "2017-04"};
  pts[3].status = Status::imaged;
  pts[3].image_id = "abc_090";
  pts[4].status = Status::no_imagery;
  testing::TempDir dir("sampler");
  write_samples(pts, dir / "s.jsonl");
  const auto back = read_samples(dir / "s.jsonl");
  REQUIRE(back.size() == pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) REQUIRE(to_jsonl(back[i]) == to_jsonl(pts[i]));
  CHECK(back[3].capture_point() == geo::LocalPoint{1.5, 2.5});
  CHECK(back[5].capture_point() == pts[5].location);

  std::ofstream(dir / "bad.jsonl") << "{\"id\": 1}\n";
  CHECK_THROWS_AS(read_samples(dir / "bad.jsonl"), DataError);
}
