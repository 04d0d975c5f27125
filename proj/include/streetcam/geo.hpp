#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

namespace streetcam::geo {

inline constexpr double kEarthRadiusM = 6'371'000.0;

/// WGS84 position in degrees.
struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  bool valid() const;
};

/// Metres east (x) / north (y) of a city origin.
struct LocalPoint {
  double x = 0.0;
  double y = 0.0;

  friend LocalPoint operator+(LocalPoint a, LocalPoint b) { return {a.x + b.x, a.y + b.y}; }
  friend LocalPoint operator-(LocalPoint a, LocalPoint b) { return {a.x - b.x, a.y - b.y}; }
  friend LocalPoint operator*(double s, LocalPoint a) { return {s * a.x, s * a.y}; }
  friend bool operator==(LocalPoint a, LocalPoint b) = default;
};

double dot(LocalPoint a, LocalPoint b);
double cross(LocalPoint a, LocalPoint b);
double norm(LocalPoint a);
double distance(LocalPoint a, LocalPoint b);

struct BBox {
  double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;

  bool intersects(const BBox& other) const;
  void expand(LocalPoint p);
  static BBox of(std::span<const LocalPoint> pts);
};

/// Local equirectangular projection around a fixed origin.
class Projection {
 public:
  Projection() = default;
  explicit Projection(GeoPoint origin);

  LocalPoint project(GeoPoint p) const;
  GeoPoint unproject(LocalPoint p) const;
  GeoPoint origin() const { return origin_; }

 private:
  GeoPoint origin_{};
  double cos_lat_ = 1.0;
};

LocalPoint project(GeoPoint p, GeoPoint origin);

class Polyline {
 public:
  Polyline() = default;
  /// Throws std::invalid_argument for fewer than two vertices.
  explicit Polyline(std::vector<LocalPoint> vertices);

  const std::vector<LocalPoint>& vertices() const { return vertices_; }
  double length() const { return length_; }
  /// Cumulative arc length at each vertex; front() == 0, back() == length().
  const std::vector<double>& cumulative() const { return cumulative_; }

  /// Point at arc length s (clamped to [0, length]) and the index of its sub-segment.
  std::pair<LocalPoint, std::size_t> point_at(double s) const;
  /// Compass bearing (degrees clockwise from north) of sub-segment i.
  double bearing_of_segment(std::size_t i) const;
  BBox bbox() const { return BBox::of(vertices_); }
  Polyline reversed() const;

 private:
  std::vector<LocalPoint> vertices_;
  std::vector<double> cumulative_;
  double length_ = 0.0;
};

using Ring = std::vector<LocalPoint>;

/// Exterior ring plus holes. Rings are closed (first == last); the
/// constructor closes an open ring.
class Polygon {
 public:
  Polygon() = default;
  explicit Polygon(Ring exterior, std::vector<Ring> holes = {});

  const Ring& exterior() const { return exterior_; }
  const std::vector<Ring>& holes() const { return holes_; }
  const BBox& bbox() const { return bbox_; }

  static Polygon rectangle(double min_x, double min_y, double max_x, double max_y);

 private:
  Ring exterior_;
  std::vector<Ring> holes_;
  BBox bbox_{};
};

struct NearestOnLine {
  LocalPoint point;
  double distance = 0.0;
  /// Arc length of `point` along the polyline.
  double arc = 0.0;
};

NearestOnLine nearest_point_on_segment(LocalPoint p, LocalPoint a, LocalPoint b);
NearestOnLine nearest_point_on_polyline(LocalPoint p, const Polyline& line);

/// Even-odd rule, holes excluded, boundary counted as inside.
bool point_in_polygon(LocalPoint p, const Polygon& poly);
double distance_to_boundary(LocalPoint p, const Polygon& poly);
/// Zero inside or on the boundary, else the distance to the nearest edge.
double distance_point_to_polygon(LocalPoint p, const Polygon& poly);

/// Pieces of `line` lying inside `poly` (boundary inclusive), in order.
std::vector<Polyline> clip_polyline(const Polyline& line, const Polygon& poly);

/// Uniform grid over feature bounding boxes. Queries return every feature
/// whose box touches a cell overlapped by the query disc's box, so results
/// are a superset of the exact answer.
class SpatialIndex {
 public:
  explicit SpatialIndex(double cell_size = 100.0);

  void insert(std::uint32_t id, const BBox& box);
  std::vector<std::uint32_t> query(LocalPoint p, double radius) const;
  double cell_size() const { return cell_; }
  std::size_t size() const { return count_; }

 private:
  using CellKey = std::int64_t;
  CellKey key(std::int64_t cx, std::int64_t cy) const;
  std::int64_t cell_of(double v) const;

  double cell_;
  std::size_t count_ = 0;
  std::unordered_map<CellKey, std::vector<std::uint32_t>> cells_;
};

template <typename Range, typename BoxFn>
SpatialIndex build_index(const Range& features, BoxFn&& box_of, double cell_size = 100.0) {
  SpatialIndex idx(cell_size);
  std::uint32_t i = 0;
  for (const auto& f : features) idx.insert(i++, box_of(f));
  return idx;
}

/// Normalise an angle in degrees to [0, 360).
double wrap_degrees(double deg);
/// Smallest absolute difference between two headings, in [0, 180].
double angular_difference(double a_deg, double b_deg);

}  // namespace streetcam::geo
