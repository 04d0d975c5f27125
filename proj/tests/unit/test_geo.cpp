#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "streetcam/geo.hpp"

using namespace streetcam::geo;
using Catch::Approx;

namespace {

double haversine(GeoPoint a, GeoPoint b) {
  const double rad = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * rad, dlon = (b.lon - a.lon) * rad;
  const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat * rad) * std::cos(b.lat * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2 * kEarthRadiusM * std::asin(std::sqrt(h));
}

// Winding number; independent of the even-odd crossing test.
int winding(LocalPoint p, const Ring& ring) {
  int wn = 0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    const auto a = ring[i], b = ring[i + 1];
    const double side = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
    if (a.y <= p.y) {
      if (b.y > p.y && side > 0) ++wn;
    } else if (b.y <= p.y && side < 0) {
      --wn;
    }
  }
  return wn;
}

// Random simple star-shaped polygon around the origin.
Ring star(std::mt19937_64& g, int n, double r_min, double r_max) {
  std::uniform_real_distribution<double> radius(r_min, r_max);
  Ring ring;
  for (int i = 0; i < n; ++i) {
    const double t = 2 * std::numbers::pi * i / n;
    const double r = radius(g);
    ring.push_back({r * std::cos(t), r * std::sin(t)});
  }
  ring.push_back(ring.front());
  return ring;
}

double brute_distance_to_polyline(LocalPoint p, const Polyline& line, int steps) {
  double best = 1e300;
  for (int i = 0; i <= steps; ++i) {
    best = std::min(best, distance(p, line.point_at(line.length() * i / steps).first));
  }
  return best;
}

}  // namespace

TEST_CASE("projection round trip and distances agree with great-circle distance") {
  const GeoPoint origin{37.7749, -122.4194};
  const Projection proj(origin);
  CHECK(proj.project(origin).x == Approx(0.0).margin(1e-9));
  std::mt19937_64 g(1);
  std::uniform_real_distribution<double> d(-0.03, 0.03);
  for (int i = 0; i < 500; ++i) {
    const GeoPoint a{origin.lat + d(g), origin.lon + d(g)};
    const GeoPoint b{origin.lat + d(g), origin.lon + d(g)};
    const auto back = proj.unproject(proj.project(a));
    REQUIRE(back.lat == Approx(a.lat).margin(1e-10));
    REQUIRE(back.lon == Approx(a.lon).margin(1e-10));
    // City scale (a few km): equirectangular error stays well under 0.5%.
    const double h = haversine(a, b);
    if (h > 10.0) REQUIRE(distance(proj.project(a), proj.project(b)) == Approx(h).epsilon(5e-3));
  }
}

TEST_CASE("one degree of latitude is about 111.2 km") {
  const Projection proj({0.0, 0.0});
  CHECK(proj.project({1.0, 0.0}).y == Approx(111194.93).epsilon(1e-6));
}

TEST_CASE("polyline length, point_at and bearings") {
  const Polyline line({{0, 0}, {0, 100}, {100, 100}});
  CHECK(line.length() == Approx(200));
  CHECK(line.cumulative().back() == Approx(200));
  auto [p, sub] = line.point_at(150);
  CHECK(p.x == Approx(50));
  CHECK(p.y == Approx(100));
  CHECK(sub == 1);
  CHECK(line.bearing_of_segment(0) == Approx(0.0));
  CHECK(line.bearing_of_segment(1) == Approx(90.0));
  CHECK(line.reversed().bearing_of_segment(0) == Approx(270.0));
  CHECK_THROWS(Polyline({{0, 0}}));
}

TEST_CASE("point in polygon matches a winding-number oracle") {
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> coord(-120, 120);
  for (int k = 0; k < 50; ++k) {
    const Ring ring = star(g, 5 + k % 20, 20, 100);
    const Polygon poly(ring);
    for (int i = 0; i < 400; ++i) {
      const LocalPoint p{coord(g), coord(g)};
      // Skip points within a hair of an edge where the two rules may differ.
      if (distance_to_boundary(p, poly) < 1e-6) continue;
      REQUIRE(point_in_polygon(p, poly) == (winding(p, ring) != 0));
    }
  }
}

TEST_CASE("boundary points count as inside and holes are excluded") {
  const Polygon sq(Ring{{0, 0}, {10, 0}, {10, 10}, {0, 10}},
                   {Ring{{4, 4}, {6, 4}, {6, 6}, {4, 6}}});
  CHECK(point_in_polygon({0, 5}, sq));
  CHECK(point_in_polygon({10, 10}, sq));
  CHECK(point_in_polygon({2, 2}, sq));
  CHECK_FALSE(point_in_polygon({5, 5}, sq));
  CHECK(point_in_polygon({4, 5}, sq));  // on the hole's edge
  CHECK_FALSE(point_in_polygon({11, 5}, sq));
  CHECK(distance_point_to_polygon({2, 2}, sq) == 0.0);
  CHECK(distance_point_to_polygon({13, 14}, sq) == Approx(5.0));
  CHECK(distance_point_to_polygon({5, 5}, sq) == Approx(1.0));
}

TEST_CASE("nearest point on polyline agrees with dense sampling") {
  std::mt19937_64 g(9);
  std::uniform_real_distribution<double> coord(-50, 50);
  for (int k = 0; k < 100; ++k) {
    std::vector<LocalPoint> v;
    for (int i = 0; i < 2 + k % 6; ++i) v.push_back({coord(g), coord(g)});
    const Polyline line(v);
    const LocalPoint p{coord(g), coord(g)};
    const auto near = nearest_point_on_polyline(p, line);
    const double brute = brute_distance_to_polyline(p, line, 20000);
    REQUIRE(near.distance <= brute + 1e-9);
    REQUIRE(near.distance == Approx(brute).margin(line.length() / 20000 + 1e-9));
    REQUIRE(distance(line.point_at(near.arc).first, near.point) == Approx(0.0).margin(1e-6));
  }
}

TEST_CASE("segment projection clamps to the endpoints") {
  auto n = nearest_point_on_segment({-5, 3}, {0, 0}, {10, 0});
  CHECK(n.point == LocalPoint{0, 0});
  CHECK(n.distance == Approx(std::hypot(5, 3)));
  n = nearest_point_on_segment({4, 3}, {0, 0}, {10, 0});
  CHECK(n.distance == Approx(3));
  CHECK(n.arc == Approx(4));
  n = nearest_point_on_segment({4, 3}, {1, 1}, {1, 1});
  CHECK(n.distance == Approx(std::hypot(3, 2)));
}

TEST_CASE("clip_polyline keeps only inside pieces") {
  const auto box = Polygon::rectangle(0, 0, 100, 100);
  const Polyline through({{-50, 50}, {150, 50}});
  const auto pieces = clip_polyline(through, box);
  REQUIRE(pieces.size() == 1);
  CHECK(pieces[0].length() == Approx(100));

  // In, out, in again.
  const Polyline zig({{10, 10}, {10, 150}, {90, 150}, {90, 10}});
  const auto two = clip_polyline(zig, box);
  REQUIRE(two.size() == 2);
  CHECK(two[0].length() + two[1].length() == Approx(180));

  CHECK(clip_polyline(Polyline({{200, 200}, {300, 300}}), box).empty());
}

TEST_CASE("spatial index returns a superset of the exact answer") {
  std::mt19937_64 g(13);
  std::uniform_real_distribution<double> coord(-1000, 1000), size(1, 80), radius(0, 250);
  std::vector<BBox> boxes;
  for (int i = 0; i < 2000; ++i) {
    const double x = coord(g), y = coord(g);
    boxes.push_back({x, y, x + size(g), y + size(g)});
  }
  const auto idx = build_index(boxes, [](const BBox& b) { return b; }, 100.0);
  CHECK(idx.size() == boxes.size());
  for (int q = 0; q < 300; ++q) {
    const LocalPoint p{coord(g), coord(g)};
    const double r = radius(g);
    const auto hits = idx.query(p, r);
    REQUIRE(std::is_sorted(hits.begin(), hits.end()));
    REQUIRE(std::adjacent_find(hits.begin(), hits.end()) == hits.end());
    for (std::uint32_t i = 0; i < boxes.size(); ++i) {
      const auto& b = boxes[i];
      const double dx = std::max({b.min_x - p.x, 0.0, p.x - b.max_x});
      const double dy = std::max({b.min_y - p.y, 0.0, p.y - b.max_y});
      if (std::hypot(dx, dy) <= r) REQUIRE(std::binary_search(hits.begin(), hits.end(), i));
    }
  }
}

TEST_CASE("angle helpers") {
  CHECK(wrap_degrees(-90) == Approx(270));
  CHECK(wrap_degrees(720) == Approx(0));
  CHECK(angular_difference(350, 10) == Approx(20));
  CHECK(angular_difference(0, 180) == Approx(180));
  CHECK(angular_difference(90, 90) == Approx(0));
}
