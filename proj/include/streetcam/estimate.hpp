#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace streetcam::estimate {

inline constexpr double kDefaultRecall = 0.63;
inline constexpr double kZ95 = 1.96;

/// Recall- and coverage-adjusted camera count for one city:
///   K = n / (c r),  se(K) = sqrt(N p (1 - p)) / (c r),  p = n / N.
/// Recall and coverage are treated as exact; the variance ignores their
/// uncertainty.
struct CityEstimate {
  std::string city;
  std::string region;
  double n = 0.0;        // verified detections
  double n_images = 0.0; // N
  double c = 0.0;
  double r = 0.0;
  double p = 0.0;
  double k_hat = 0.0;
  double se = 0.0;
  double road_length_km = 0.0;
  double mean_d = 0.0;  // informational; c already folds it in
  double density = 0.0;
  double density_se = 0.0;
  double ci95_low = 0.0;
  double ci95_high = 0.0;
};

/// Throws DataError on c*r == 0, n > N, N < 1 or r outside (0, 1].
CityEstimate estimate_city(double n, double n_images, double c, double r, double road_length_km,
                           std::string city = {});

struct CityInput {
  std::string city;
  std::string region;
  double n = 0.0;
  double n_images = 0.0;
  double mean_d = 0.0;
  double road_length_km = 0.0;
  /// Per-city recall; <= 0 means "use the global value".
  double recall = 0.0;
};

/// c is derived as N * d-bar / (2 D).
CityEstimate estimate_from_input(const CityInput& in, double recall);

/// Rows grouped by region (first-appearance order), each group sorted by
/// descending density.
std::vector<CityEstimate> estimate_all(std::span<const CityInput> inputs, double recall = kDefaultRecall);

/// Presentation rounding: counts to the nearest 100 (nearest 50 below 100).
double round_count(double v);
double round_density(double v);

/// Table-shaped CSV: rounded presentation columns followed by raw values.
std::string report_csv(std::span<const CityEstimate> rows);
/// Fixed-width text table mirroring the published layout.
std::string report_text(std::span<const CityEstimate> rows);

/// "city,region,N,mean_d_m,D_km,n[,recall]" with a header line.
std::vector<CityInput> parse_inputs_csv(std::string_view text);

}  // namespace streetcam::estimate
