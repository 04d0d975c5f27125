#include "streetcam/coverage.hpp"

#include <limits>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "streetcam/error.hpp"
#include "streetcam/io.hpp"

namespace streetcam::coverage {

using json = nlohmann::json;

FootprintLocator::FootprintLocator(const std::vector<ingest::Footprint>& footprints, double cell_size)
    : footprints_(&footprints),
      index_(geo::build_index(footprints, [](const ingest::Footprint& f) { return f.shape.bbox(); },
                              cell_size)) {}

std::optional<double> FootprintLocator::nearest(geo::LocalPoint p, double horizon) const {
  double best = std::numeric_limits<double>::infinity();
  for (auto id : index_.query(p, horizon)) {
    best = std::min(best, geo::distance_point_to_polygon(p, (*footprints_)[id].shape));
  }
  if (best > horizon) return std::nullopt;
  return best;
}

CoverageRecord image_coverage(std::uint64_t sample_id, geo::LocalPoint capture,
                              const FootprintLocator& locator, double cutoff, double horizon) {
  CoverageRecord r;
  r.sample_id = sample_id;
  if (auto delta = locator.nearest(capture, horizon)) {
    r.delta = *delta;
    r.d = 2.0 * r.delta;
    r.included = r.delta <= cutoff;
  } else {
    r.beyond_horizon = true;
    r.delta = std::numeric_limits<double>::infinity();
    r.d = std::numeric_limits<double>::infinity();
  }
  return r;
}

CityCoverage coverage_from_mean(std::size_t n_images, double mean_d, double road_length_m) {
  if (!(road_length_m > 0.0)) throw DataError("road length must be positive");
  CityCoverage c;
  c.n_images = n_images;
  c.mean_d = mean_d;
  c.road_length_m = road_length_m;
  c.c = static_cast<double>(n_images) * mean_d / (2.0 * road_length_m);
  c.oversampled = c.c > 1.0;
  if (c.oversampled) spdlog::warn("coverage fraction {:.4f} exceeds 1: the sample covers the network more than once", c.c);
  return c;
}

CityCoverage city_coverage(std::span<const CoverageRecord> records, double road_length_m) {
  std::size_t n = 0;
  double sum = 0.0;
  for (const auto& r : records) {
    if (!r.included) continue;
    ++n;
    sum += r.d;
  }
  if (n == 0) throw DataError("no image within the building cutoff; coverage undefined");
  return coverage_from_mean(n, sum / static_cast<double>(n), road_length_m);
}

std::vector<CoverageRecord> impute_coverage(const ingest::CityBundle& bundle,
                                            std::span<const std::uint64_t> sample_ids, double mean_d) {
  if (!bundle.footprints.empty()) {
    throw DataError(bundle.city + " has building footprints; refusing to impute coverage");
  }
  std::vector<CoverageRecord> out;
  out.reserve(sample_ids.size());
  for (auto id : sample_ids) out.push_back({id, mean_d / 2.0, mean_d, true, false});
  return out;
}

std::string to_jsonl(const CoverageRecord& r) {
  json j{{"sample_id", r.sample_id}, {"included", r.included}};
  if (r.beyond_horizon) {
    j["beyond_horizon"] = true;
    j["delta"] = nullptr;
    j["d"] = nullptr;
  } else {
    j["delta"] = r.delta;
    j["d"] = r.d;
  }
  return j.dump();
}

CoverageRecord coverage_from_jsonl(std::string_view line) {
  const json j = json::parse(line);
  CoverageRecord r;
  r.sample_id = j.at("sample_id").get<std::uint64_t>();
  r.included = j.at("included").get<bool>();
  r.beyond_horizon = j.value("beyond_horizon", false);
  if (r.beyond_horizon) {
    r.delta = r.d = std::numeric_limits<double>::infinity();
  } else {
    r.delta = j.at("delta").get<double>();
    r.d = j.at("d").get<double>();
  }
  return r;
}

void write_coverage(std::span<const CoverageRecord> records, const std::filesystem::path& file) {
  io::AtomicWriter out(file);
  for (const auto& r : records) out.stream() << to_jsonl(r) << '\n';
  out.commit();
}

std::vector<CoverageRecord> read_coverage(const std::filesystem::path& file) {
  std::vector<CoverageRecord> out;
  io::for_each_line(file, [&](std::string_view line, std::size_t n) {
    try {
      out.push_back(coverage_from_jsonl(line));
    } catch (const std::exception& e) {
      throw DataError(file.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  });
  return out;
}

std::string summary_csv(std::span<const CoverageSummaryRow> rows) {
  std::string out = "city,N,mean_d_m,D_km,c\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{}\n", r.city, r.coverage.n_images, r.coverage.mean_d,
                       r.coverage.road_length_m / 1000.0, r.coverage.c);
  }
  return out;
}

std::vector<CoverageSummaryRow> parse_summary_csv(std::string_view text) {
  std::vector<CoverageSummaryRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || n == 1) continue;
    std::vector<std::string> cols;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    if (cols.size() != 5) throw DataError("coverage summary line " + std::to_string(n) + ": expected 5 columns");
    try {
      const auto n_images = static_cast<std::size_t>(std::stoull(cols[1]));
      const double mean_d = std::stod(cols[2]);
      const double d_km = std::stod(cols[3]);
      rows.push_back({cols[0], coverage_from_mean(n_images, mean_d, d_km * 1000.0)});
    } catch (const std::logic_error& e) {
      throw DataError("coverage summary line " + std::to_string(n) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace streetcam::coverage
