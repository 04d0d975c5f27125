#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "streetcam/geo.hpp"
#include "streetcam/ingest.hpp"
#include "streetcam/rng.hpp"

namespace streetcam::sampler {

enum class Side { left, right };
enum class Status { pending, no_imagery, imaged };

std::string_view to_string(Side s);
std::string_view to_string(Status s);

/// Where the imagery provider actually took the picture for a point.
struct Capture {
  geo::LocalPoint location;
  std::string pano_id;
  std::string date;  // "YYYY-MM"
};

struct SamplePoint {
  std::uint64_t id = 0;
  geo::LocalPoint location;
  geo::GeoPoint geo;
  std::uint32_t segment = 0;
  double road_bearing = 0.0;
  double view_heading = 0.0;
  Side side = Side::left;
  Status status = Status::pending;
  std::optional<Capture> capture;
  std::string image_id;

  /// Capture location when known, otherwise the sampled road location.
  geo::LocalPoint capture_point() const { return capture ? capture->location : location; }
};

/// Draws points along a network: one uniform draw over total road length
/// (equivalent to a length-weighted segment choice followed by a uniform
/// offset), then a fair coin for the viewed side.
class RoadSampler {
 public:
  /// Throws DataError on an empty or zero-length network.
  RoadSampler(const ingest::RoadNetwork& network, geo::Projection projection);

  SamplePoint draw(Rng& rng, std::uint64_t id) const;
  double total_length() const { return cumulative_.back(); }

 private:
  const ingest::RoadNetwork* network_;
  geo::Projection projection_;
  std::vector<double> cumulative_;
};

/// Deterministic for a fixed (network, n, seed, stream name).
std::vector<SamplePoint> sample_points(const ingest::RoadNetwork& network,
                                       const geo::Projection& projection, std::size_t n,
                                       std::uint64_t seed, std::string_view stream = "");

using AvailabilityOracle = std::function<std::optional<Capture>(const SamplePoint&)>;

struct AvailabilityResult {
  std::vector<SamplePoint> points;
  std::size_t draws = 0;     // oracle queries, including the original points
  std::size_t rejected = 0;  // points discarded for lack of imagery
};

/// Replaces unavailable points with fresh draws from the same law until every
/// slot holds an available point. Throws DataError once `max_draws` oracle
/// queries are spent (default 10 * n).
AvailabilityResult apply_availability(std::vector<SamplePoint> points, const AvailabilityOracle& oracle,
                                      const RoadSampler& sampler, Rng& rng,
                                      std::optional<std::size_t> max_draws = std::nullopt);

std::string to_jsonl(const SamplePoint& p);
SamplePoint sample_from_jsonl(std::string_view line);
void write_samples(const std::vector<SamplePoint>& points, const std::filesystem::path& file);
std::vector<SamplePoint> read_samples(const std::filesystem::path& file);

}  // namespace streetcam::sampler
