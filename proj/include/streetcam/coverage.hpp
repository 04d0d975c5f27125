#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streetcam/geo.hpp"
#include "streetcam/ingest.hpp"

namespace streetcam::coverage {

inline constexpr double kBuildingCutoffM = 30.0;
inline constexpr double kSearchHorizonM = 120.0;
inline constexpr double kImputedMeanCoverageM = 29.0;

/// Road length seen by one image: d = 2 * delta, delta being the distance
/// from the capture point to the nearest building footprint.
struct CoverageRecord {
  std::uint64_t sample_id = 0;
  double delta = 0.0;
  double d = 0.0;
  bool included = false;
  /// No footprint within the search horizon; delta and d are meaningless.
  bool beyond_horizon = false;
};

struct CityCoverage {
  std::size_t n_images = 0;  // N: included images
  double mean_d = 0.0;       // d-bar, metres
  double road_length_m = 0.0;
  double c = 0.0;
  /// c > 1: the sample covers the network more than once.
  bool oversampled = false;
};

/// Nearest-footprint lookup over a prebuilt index of footprint boxes.
class FootprintLocator {
 public:
  explicit FootprintLocator(const std::vector<ingest::Footprint>& footprints,
                            double cell_size = 100.0);

  /// Distance to the nearest footprint, or nullopt beyond `horizon`.
  std::optional<double> nearest(geo::LocalPoint p, double horizon = kSearchHorizonM) const;

 private:
  const std::vector<ingest::Footprint>* footprints_;
  geo::SpatialIndex index_;
};

CoverageRecord image_coverage(std::uint64_t sample_id, geo::LocalPoint capture,
                              const FootprintLocator& locator, double cutoff = kBuildingCutoffM,
                              double horizon = kSearchHorizonM);

/// N counts included records only. Throws DataError with none included.
CityCoverage city_coverage(std::span<const CoverageRecord> records, double road_length_m);
/// Closed form, for callers that already hold N and d-bar.
CityCoverage coverage_from_mean(std::size_t n_images, double mean_d, double road_length_m);

/// Coverage for a city without usable footprints: every image included at
/// the imputed mean. Throws DataError when the bundle has footprints.
std::vector<CoverageRecord> impute_coverage(const ingest::CityBundle& bundle,
                                            std::span<const std::uint64_t> sample_ids,
                                            double mean_d = kImputedMeanCoverageM);

std::string to_jsonl(const CoverageRecord& r);
CoverageRecord coverage_from_jsonl(std::string_view line);
void write_coverage(std::span<const CoverageRecord> records, const std::filesystem::path& file);
std::vector<CoverageRecord> read_coverage(const std::filesystem::path& file);

/// Summary CSV: header "city,N,mean_d_m,D_km,c" and one row per city.
struct CoverageSummaryRow {
  std::string city;
  CityCoverage coverage;
};
std::string summary_csv(std::span<const CoverageSummaryRow> rows);
std::vector<CoverageSummaryRow> parse_summary_csv(std::string_view text);

}  // namespace streetcam::coverage
