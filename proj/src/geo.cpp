#include "streetcam/geo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace streetcam::geo {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Relative tolerance for on-segment tests.
constexpr double kEps = 1e-12;

bool on_segment(LocalPoint p, LocalPoint a, LocalPoint b) {
  const LocalPoint ab = b - a;
  const LocalPoint ap = p - a;
  const double scale = std::max({1.0, norm(ab), norm(ap)});
  if (std::abs(cross(ab, ap)) > kEps * scale * scale) return false;
  const double t = dot(ap, ab);
  return t >= -kEps * scale * scale && t <= dot(ab, ab) + kEps * scale * scale;
}

bool on_ring(LocalPoint p, const Ring& ring) {
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    if (on_segment(p, ring[i], ring[i + 1])) return true;
  }
  return false;
}

// Crossing-number test; boundary handled by the caller.
bool inside_ring(LocalPoint p, const Ring& ring) {
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const LocalPoint a = ring[i];
    const LocalPoint b = ring[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

double ring_distance(LocalPoint p, const Ring& ring) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    best = std::min(best, nearest_point_on_segment(p, ring[i], ring[i + 1]).distance);
  }
  return best;
}

Ring closed(Ring r) {
  if (r.size() >= 2 && !(r.front() == r.back())) r.push_back(r.front());
  return r;
}

// Parameters t in (0,1) where segment a-b crosses segment c-d.
void crossings(LocalPoint a, LocalPoint b, LocalPoint c, LocalPoint d, std::vector<double>& out) {
  const LocalPoint r = b - a;
  const LocalPoint s = d - c;
  const double denom = cross(r, s);
  if (denom == 0.0) return;  // parallel or collinear: midpoint tests resolve these
  const LocalPoint ac = c - a;
  const double t = cross(ac, s) / denom;
  const double u = cross(ac, r) / denom;
  if (t > 0.0 && t < 1.0 && u >= 0.0 && u <= 1.0) out.push_back(t);
}

}  // namespace

bool GeoPoint::valid() const {
  return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 &&
         lon >= -180.0 && lon <= 180.0;
}

double dot(LocalPoint a, LocalPoint b) { return a.x * b.x + a.y * b.y; }
double cross(LocalPoint a, LocalPoint b) { return a.x * b.y - a.y * b.x; }
double norm(LocalPoint a) { return std::hypot(a.x, a.y); }
double distance(LocalPoint a, LocalPoint b) { return norm(a - b); }

bool BBox::intersects(const BBox& o) const {
  return min_x <= o.max_x && o.min_x <= max_x && min_y <= o.max_y && o.min_y <= max_y;
}

void BBox::expand(LocalPoint p) {
  min_x = std::min(min_x, p.x);
  min_y = std::min(min_y, p.y);
  max_x = std::max(max_x, p.x);
  max_y = std::max(max_y, p.y);
}

BBox BBox::of(std::span<const LocalPoint> pts) {
  if (pts.empty()) return {};
  BBox b{pts[0].x, pts[0].y, pts[0].x, pts[0].y};
  for (const auto& p : pts) b.expand(p);
  return b;
}

Projection::Projection(GeoPoint origin)
    : origin_(origin), cos_lat_(std::cos(origin.lat * kDegToRad)) {}

LocalPoint Projection::project(GeoPoint p) const {
  return {kEarthRadiusM * (p.lon - origin_.lon) * kDegToRad * cos_lat_,
          kEarthRadiusM * (p.lat - origin_.lat) * kDegToRad};
}

GeoPoint Projection::unproject(LocalPoint p) const {
  return {origin_.lat + p.y / (kEarthRadiusM * kDegToRad),
          origin_.lon + p.x / (kEarthRadiusM * kDegToRad * cos_lat_)};
}

LocalPoint project(GeoPoint p, GeoPoint origin) { return Projection(origin).project(p); }

Polyline::Polyline(std::vector<LocalPoint> vertices) : vertices_(std::move(vertices)) {
  if (vertices_.size() < 2) throw std::invalid_argument("polyline needs at least two vertices");
  cumulative_.reserve(vertices_.size());
  cumulative_.push_back(0.0);
  for (std::size_t i = 1; i < vertices_.size(); ++i) {
    length_ += distance(vertices_[i - 1], vertices_[i]);
    cumulative_.push_back(length_);
  }
}

std::pair<LocalPoint, std::size_t> Polyline::point_at(double s) const {
  s = std::clamp(s, 0.0, length_);
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  std::size_t i = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  // Zero-length sub-segments and s == length land on the last real segment.
  i = std::min(i, vertices_.size() - 2);
  while (i > 0 && cumulative_[i + 1] == cumulative_[i]) --i;
  const double seg = cumulative_[i + 1] - cumulative_[i];
  const double t = seg > 0.0 ? (s - cumulative_[i]) / seg : 0.0;
  return {vertices_[i] + t * (vertices_[i + 1] - vertices_[i]), i};
}

double Polyline::bearing_of_segment(std::size_t i) const {
  const LocalPoint d = vertices_.at(i + 1) - vertices_.at(i);
  return wrap_degrees(std::atan2(d.x, d.y) / kDegToRad);
}

Polyline Polyline::reversed() const {
  return Polyline(std::vector<LocalPoint>(vertices_.rbegin(), vertices_.rend()));
}

Polygon::Polygon(Ring exterior, std::vector<Ring> holes) : exterior_(closed(std::move(exterior))) {
  if (exterior_.size() < 4) throw std::invalid_argument("polygon ring needs at least three points");
  holes_.reserve(holes.size());
  for (auto& h : holes) holes_.push_back(closed(std::move(h)));
  bbox_ = BBox::of(exterior_);
}

Polygon Polygon::rectangle(double min_x, double min_y, double max_x, double max_y) {
  return Polygon({{min_x, min_y}, {max_x, min_y}, {max_x, max_y}, {min_x, max_y}});
}

NearestOnLine nearest_point_on_segment(LocalPoint p, LocalPoint a, LocalPoint b) {
  const LocalPoint ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const LocalPoint q = a + t * ab;
  return {q, distance(p, q), t * std::sqrt(len2)};
}

NearestOnLine nearest_point_on_polyline(LocalPoint p, const Polyline& line) {
  const auto& v = line.vertices();
  NearestOnLine best{v.front(), std::numeric_limits<double>::infinity(), 0.0};
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    auto cand = nearest_point_on_segment(p, v[i], v[i + 1]);
    if (cand.distance < best.distance) {
      cand.arc += line.cumulative()[i];
      best = cand;
    }
  }
  return best;
}

bool point_in_polygon(LocalPoint p, const Polygon& poly) {
  const BBox& b = poly.bbox();
  if (p.x < b.min_x || p.x > b.max_x || p.y < b.min_y || p.y > b.max_y) return false;
  if (on_ring(p, poly.exterior())) return true;
  for (const auto& h : poly.holes()) {
    if (on_ring(p, h)) return true;
  }
  if (!inside_ring(p, poly.exterior())) return false;
  for (const auto& h : poly.holes()) {
    if (inside_ring(p, h)) return false;
  }
  return true;
}

double distance_to_boundary(LocalPoint p, const Polygon& poly) {
  double best = ring_distance(p, poly.exterior());
  for (const auto& h : poly.holes()) best = std::min(best, ring_distance(p, h));
  return best;
}

double distance_point_to_polygon(LocalPoint p, const Polygon& poly) {
  if (point_in_polygon(p, poly)) return 0.0;
  return distance_to_boundary(p, poly);
}

std::vector<Polyline> clip_polyline(const Polyline& line, const Polygon& poly) {
  std::vector<Polyline> out;
  std::vector<LocalPoint> current;
  auto flush = [&] {
    if (current.size() >= 2) out.emplace_back(std::move(current));
    current.clear();
  };
  auto append = [&](LocalPoint p) {
    if (current.empty() || !(current.back() == p)) current.push_back(p);
  };

  const auto& v = line.vertices();
  std::vector<double> ts;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const LocalPoint a = v[i];
    const LocalPoint b = v[i + 1];
    ts.assign({0.0, 1.0});
    auto collect = [&](const Ring& ring) {
      for (std::size_t k = 0; k + 1 < ring.size(); ++k) crossings(a, b, ring[k], ring[k + 1], ts);
    };
    collect(poly.exterior());
    for (const auto& h : poly.holes()) collect(h);
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());

    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
      const LocalPoint p0 = a + ts[k] * (b - a);
      const LocalPoint p1 = a + ts[k + 1] * (b - a);
      const LocalPoint mid = 0.5 * (p0 + p1);
      if (point_in_polygon(mid, poly)) {
        append(p0);
        append(p1);
      } else {
        flush();
      }
    }
  }
  flush();
  return out;
}

SpatialIndex::SpatialIndex(double cell_size) : cell_(cell_size) {
  if (!(cell_size > 0.0)) throw std::invalid_argument("cell size must be positive");
}

std::int64_t SpatialIndex::cell_of(double v) const {
  return static_cast<std::int64_t>(std::floor(v / cell_));
}

SpatialIndex::CellKey SpatialIndex::key(std::int64_t cx, std::int64_t cy) const {
  return (cx << 32) ^ static_cast<std::int64_t>(static_cast<std::uint32_t>(cy));
}

void SpatialIndex::insert(std::uint32_t id, const BBox& box) {
  for (auto cx = cell_of(box.min_x); cx <= cell_of(box.max_x); ++cx) {
    for (auto cy = cell_of(box.min_y); cy <= cell_of(box.max_y); ++cy) {
      cells_[key(cx, cy)].push_back(id);
    }
  }
  ++count_;
}

std::vector<std::uint32_t> SpatialIndex::query(LocalPoint p, double radius) const {
  std::vector<std::uint32_t> out;
  if (cells_.empty()) return out;
  radius = std::max(radius, 0.0);
  for (auto cx = cell_of(p.x - radius); cx <= cell_of(p.x + radius); ++cx) {
    for (auto cy = cell_of(p.y - radius); cy <= cell_of(p.y + radius); ++cy) {
      auto it = cells_.find(key(cx, cy));
      if (it != cells_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double wrap_degrees(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0.0) r += 360.0;
  if (r >= 360.0) r = 0.0;
  return r;
}

double angular_difference(double a_deg, double b_deg) {
  const double d = wrap_degrees(a_deg - b_deg);
  return d > 180.0 ? 360.0 - d : d;
}

}  // namespace streetcam::geo
