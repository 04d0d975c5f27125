#include "streetcam/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "streetcam/error.hpp"

namespace streetcam::estimate {

CityEstimate estimate_city(double n, double n_images, double c, double r, double road_length_km,
                           std::string city) {
  if (!(n_images >= 1.0)) throw DataError("N must be at least 1");
  if (!(n >= 0.0)) throw DataError("detection count must be non-negative");
  if (n > n_images) throw DataError("more detections than images (n > N) in " + city);
  if (!(r > 0.0 && r <= 1.0)) throw DataError("recall must lie in (0, 1]");
  if (!(c * r > 0.0)) throw DataError("coverage times recall is zero for " + city);
  if (!(road_length_km > 0.0)) throw DataError("road length must be positive");

  CityEstimate e;
  e.city = std::move(city);
  e.n = n;
  e.n_images = n_images;
  e.c = c;
  e.r = r;
  e.p = n / n_images;
  const double scale = c * r;
  e.k_hat = n / scale;
  e.se = std::sqrt(n_images * e.p * (1.0 - e.p)) / scale;
  e.road_length_km = road_length_km;
  e.density = e.k_hat / road_length_km;
  e.density_se = e.se / road_length_km;
  e.ci95_low = std::max(0.0, e.k_hat - kZ95 * e.se);
  e.ci95_high = e.k_hat + kZ95 * e.se;
  return e;
}

CityEstimate estimate_from_input(const CityInput& in, double recall) {
  const double r = in.recall > 0.0 ? in.recall : recall;
  if (!(in.road_length_km > 0.0)) throw DataError("road length must be positive for " + in.city);
  const double c = in.n_images * in.mean_d / (2.0 * in.road_length_km * 1000.0);
  auto e = estimate_city(in.n, in.n_images, c, r, in.road_length_km, in.city);
  e.region = in.region;
  e.mean_d = in.mean_d;
  return e;
}

std::vector<CityEstimate> estimate_all(std::span<const CityInput> inputs, double recall) {
  std::vector<std::string> regions;
  std::vector<CityEstimate> rows;
  for (const auto& in : inputs) {
    if (std::find(regions.begin(), regions.end(), in.region) == regions.end()) regions.push_back(in.region);
    rows.push_back(estimate_from_input(in, recall));
  }
  std::stable_sort(rows.begin(), rows.end(), [&](const CityEstimate& a, const CityEstimate& b) {
    const auto ra = std::find(regions.begin(), regions.end(), a.region) - regions.begin();
    const auto rb = std::find(regions.begin(), regions.end(), b.region) - regions.begin();
    if (ra != rb) return ra < rb;
    return a.density > b.density;
  });
  return rows;
}

double round_count(double v) {
  const double step = v < 100.0 ? 50.0 : 100.0;
  return std::round(v / step) * step;
}

double round_density(double v) { return std::round(v * 100.0) / 100.0; }

std::string report_csv(std::span<const CityEstimate> rows) {
  std::string out =
      "city,region,road_length_km,mean_road_coverage_m,detections,density,density_se,"
      "estimated_cameras,cameras_se,N,c,r,k_hat,se,density_raw,density_se_raw,ci95_low,ci95_high\n";
  for (const auto& e : rows) {
    out += fmt::format("{},{},{},{},{},{:.2f},{:.2f},{:.0f},{:.0f},{},{},{},{},{},{},{},{},{}\n", e.city,
                       e.region, e.road_length_km, e.mean_d, e.n, round_density(e.density),
                       round_density(e.density_se), round_count(e.k_hat), round_count(e.se),
                       e.n_images, e.c, e.r, e.k_hat, e.se, e.density, e.density_se, e.ci95_low,
                       e.ci95_high);
  }
  return out;
}

std::string report_text(std::span<const CityEstimate> rows) {
  std::string out = fmt::format("{:<16} {:>10} {:>9} {:>10} {:>16} {:>18}\n", "City", "Road (km)",
                                "d-bar (m)", "Detections", "Density (/km)", "Cameras");
  std::string region;
  bool first = true;
  for (const auto& e : rows) {
    if (!first && e.region != region) out += std::string(84, '-') + "\n";
    first = false;
    region = e.region;
    out += fmt::format("{:<16} {:>10.0f} {:>9.0f} {:>10.0f} {:>9.2f} ({:.2f}) {:>9.0f} ({:.0f})\n", e.city,
                       e.road_length_km, e.mean_d, e.n, round_density(e.density),
                       round_density(e.density_se), round_count(e.k_hat), round_count(e.se));
  }
  return out;
}

std::vector<CityInput> parse_inputs_csv(std::string_view text) {
  std::vector<CityInput> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#' || n == 1) continue;
    std::vector<std::string> cols;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    if (cols.size() != 6 && cols.size() != 7) {
      throw DataError("inputs line " + std::to_string(n) + ": expected 6 or 7 columns");
    }
    try {
      CityInput ci;
      ci.city = cols[0];
      ci.region = cols[1];
      ci.n_images = std::stod(cols[2]);
      ci.mean_d = std::stod(cols[3]);
      ci.road_length_km = std::stod(cols[4]);
      ci.n = std::stod(cols[5]);
      if (cols.size() == 7 && !cols[6].empty()) ci.recall = std::stod(cols[6]);
      out.push_back(std::move(ci));
    } catch (const std::logic_error& e) {
      throw DataError("inputs line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace streetcam::estimate
