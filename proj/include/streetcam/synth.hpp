#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streetcam/detect.hpp"
#include "streetcam/geo.hpp"
#include "streetcam/ingest.hpp"
#include "streetcam/sampler.hpp"

namespace streetcam::synth {

struct CityParams {
  int rows = 8;
  int cols = 8;
  double spacing = 250.0;
  double setback = 10.0;
  double density_per_km = 0.0;
  std::uint64_t seed = 1;
  /// Plant exactly this many cameras (uniform along road length) instead of
  /// a Poisson count at `density_per_km`.
  std::optional<std::size_t> cameras;
  geo::GeoPoint origin{37.0, -122.0};
};

struct PlantedCamera {
  geo::LocalPoint location;
  std::uint32_t segment = 0;
  double arc = 0.0;  // position along the street, metres
  sampler::Side side = sampler::Side::left;
};

/// Manhattan grid: rows + 1 east-west streets and cols + 1 north-south
/// streets, each a single polyline. Blocks are footprint rectangles set back
/// from the street centrelines, with an outer ring past the boundary streets.
struct SyntheticCity {
  CityParams params;
  ingest::CityBundle bundle;
  std::vector<PlantedCamera> cameras;

  std::size_t true_k() const { return cameras.size(); }
  double road_length_m() const { return bundle.roads.total_length_m(); }
};

/// (rows + 1) * cols * spacing + (cols + 1) * rows * spacing.
double grid_road_length(int rows, int cols, double spacing);

/// Throws DataError unless rows, cols >= 1, spacing > 2 * setback > 0 and
/// density >= 0.
SyntheticCity generate_city(const CityParams& params);

inline constexpr double kVisibilityRangeM = 30.0;
inline constexpr double kHalfFovDeg = 45.0;

/// Cameras on the image's street within range and inside the view wedge.
bool camera_visible(const SyntheticCity& city, const sampler::SamplePoint& image, const PlantedCamera& cam);
std::vector<std::size_t> visible_cameras(const SyntheticCity& city, const sampler::SamplePoint& image);

struct DetectorParams {
  double recall = 0.63;
  /// Expected false positives per image (Poisson).
  double fp_rate = 0.0;
  /// Probability maps are width x width with one 8x8 slot per 16 px cell.
  int map_size = 128;
  bool emit_maps = true;
  std::uint64_t seed = 1;
};

struct SimulatedImage {
  std::uint64_t sample_id = 0;
  std::string image_id;
  std::vector<std::size_t> visible;  // indices into city.cameras
};

struct SimulatedDetection {
  detect::DetectionInstance instance;
  /// Planted camera index, or nullopt for a false positive.
  std::optional<std::size_t> camera;
};

struct DetectorOutput {
  std::vector<SimulatedImage> images;
  std::vector<SimulatedDetection> detections;
  /// One map per image that has at least one detection (when requested).
  std::vector<detect::ProbabilityMap> maps;
  std::size_t visible_total = 0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
};

std::string image_id_for(std::uint64_t sample_id);

/// Throws DataError if recall is outside [0, 1] or more instances are needed
/// in one image than the map has slots.
DetectorOutput simulate_detector(const SyntheticCity& city, std::span<const sampler::SamplePoint> samples,
                                 const DetectorParams& params);

/// Map whose extracted instances are exactly `instances`; every other pixel
/// stays below the 0.75 threshold.
detect::ProbabilityMap render_map(const std::string& image_id, std::span<const detect::DetectionInstance> instances,
                                  int size, std::uint64_t seed);

struct CalibrationConfig {
  CityParams city;
  std::size_t true_k = 200;
  std::size_t n_images = 2000;
  DetectorParams detector;
  std::size_t seeds = 200;
  std::uint64_t master_seed = 1;
  std::size_t jobs = 1;
  /// Verdicts per task for the oracle annotators.
  std::size_t quorum = 3;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::size_t true_k = 0;
  std::size_t n_images = 0;
  std::size_t verified = 0;  // n
  double c = 0.0;
  double k_hat = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool covered = false;
  std::size_t visible = 0;
  std::size_t true_positives = 0;
};

struct CalibrationReport {
  std::vector<SeedResult> runs;
  double true_k = 0.0;
  double mean_k_hat = 0.0;
  double sd_k_hat = 0.0;
  double mean_se = 0.0;
  /// Standard error of mean_k_hat over seeds.
  double mean_k_hat_se = 0.0;
  double relative_bias = 0.0;
  double ci_coverage = 0.0;
  double measured_recall = 0.0;
  double seconds = 0.0;
};

/// One seeded run: sample, coverage, simulated detection, oracle
/// verification through a task store, estimate.
SeedResult run_seed(const CalibrationConfig& cfg, std::uint64_t seed);
CalibrationReport end_to_end_check(const CalibrationConfig& cfg);

std::string report_csv(const CalibrationReport& r);
std::string report_text(const CalibrationReport& r);

/// Writes roads.geojson, boundary.geojson, footprints.geojson and
/// cameras.geojson (WGS84) into `dir`.
void write_city(const SyntheticCity& city, const std::filesystem::path& dir);

}  // namespace streetcam::synth
