#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streetcam/geo.hpp"
#include "streetcam/ingest.hpp"

namespace streetcam::analysis {

using ingest::ZoneCategory;

struct AnalysisRow {
  std::uint64_t sample_id = 0;
  std::string city;
  int detected = 0;  // at least one verified camera in the image
  ZoneCategory zone = ZoneCategory::unknown;
  std::optional<double> minority_share;
};

inline constexpr double kParcelHorizonM = 120.0;
inline constexpr double kBlockGroupFallbackM = 100.0;

/// Zone of the nearest parcel (distance 0 when containing); ties go to the
/// smallest parcel id. Unknown when nothing lies within the horizon.
class ZoneAssigner {
 public:
  explicit ZoneAssigner(const std::vector<ingest::Parcel>& parcels, double horizon = kParcelHorizonM);
  ZoneCategory assign(geo::LocalPoint p) const;
  /// Index of the chosen parcel, if any.
  std::optional<std::uint32_t> nearest_parcel(geo::LocalPoint p) const;

 private:
  const std::vector<ingest::Parcel>* parcels_;
  geo::SpatialIndex index_;
  double horizon_;
};

/// Minority share of the containing block group (smallest id on shared
/// boundaries), else of the nearest one within 100 m, else missing.
class DemographicAssigner {
 public:
  explicit DemographicAssigner(const std::vector<ingest::BlockGroup>& groups,
                               double fallback = kBlockGroupFallbackM);
  std::optional<double> assign(geo::LocalPoint p) const;
  std::optional<std::uint32_t> block_group(geo::LocalPoint p) const;

 private:
  const std::vector<ingest::BlockGroup>* groups_;
  geo::SpatialIndex index_;
  double fallback_;
};

ZoneCategory assign_zone(geo::LocalPoint p, const ZoneAssigner& assigner);
std::optional<double> assign_demographics(geo::LocalPoint p, const DemographicAssigner& assigner);

struct ZoneRate {
  ZoneCategory zone = ZoneCategory::unknown;
  std::size_t images = 0;
  std::size_t detections = 0;
  double rate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

/// Per-zone detections / images with a Wald 95% interval clamped to [0, 1].
/// Unknown-zone rows are omitted.
std::vector<ZoneRate> zone_rates(std::span<const AnalysisRow> rows);
std::string zone_rates_csv(std::span<const ZoneRate> rates);

struct Coefficient {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double t = 0.0;
  double p_value = 1.0;
};

struct RegressionResult {
  std::vector<Coefficient> coefficients;
  std::size_t observations = 0;
  double sigma2 = 0.0;  // RSS / (n - p)
  double rss = 0.0;
  std::vector<double> residuals;

  const Coefficient& at(std::string_view name) const;
};

/// Column-major dense design matrix with named columns.
struct Design {
  std::size_t rows = 0;
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  void add_column(std::string name, std::vector<double> values);
};

/// Ordinary least squares by Householder QR with classical standard errors
/// se_j = sqrt(sigma2 * [(X'X)^-1]_jj). Throws DataError naming the first
/// column that is (numerically) a combination of the preceding ones, or
/// when there are not more rows than columns.
RegressionResult ols(const Design& x, std::span<const double> y, bool keep_residuals = false);

/// detected ~ city indicators + zone indicators (residential reference)
///            + minority + minority^2.
/// Rows with unknown zone or missing minority share are dropped.
Design lpm_design(std::span<const AnalysisRow> rows, std::vector<double>& y);
RegressionResult fit_lpm(std::span<const AnalysisRow> rows);

/// Fixed-width "coefficient(stars) (se)" table; city indicators are listed
/// only when `show_cities` is set.
std::string regression_table(const RegressionResult& r, bool show_cities = false);
std::string significance_stars(double p_value);

struct RateBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t images = 0;
  std::size_t detections = 0;
  double rate = 0.0;
};

struct RateCurve {
  std::vector<RateBin> bins;
  /// detected ~ 1 + share + share^2
  RegressionResult fit;
  std::vector<std::pair<double, double>> fitted;  // (share, predicted rate)
};

RateCurve minority_rate_curve(std::span<const AnalysisRow> rows, std::size_t bins = 10,
                              std::size_t grid_points = 101);
std::string curve_csv(const RateCurve& curve);

std::string to_jsonl(const AnalysisRow& r);
AnalysisRow row_from_jsonl(std::string_view line);
void write_rows(std::span<const AnalysisRow> rows, const std::filesystem::path& file);
std::vector<AnalysisRow> read_rows(const std::filesystem::path& file);

}  // namespace streetcam::analysis
