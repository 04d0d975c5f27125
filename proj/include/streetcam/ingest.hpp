#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "streetcam/geo.hpp"

namespace streetcam::ingest {

enum class ZoneCategory { mixed, industrial, commercial, public_, residential, unknown };

std::string_view to_string(ZoneCategory z);
/// Accepts the names produced by to_string ("public" for public_).
std::optional<ZoneCategory> parse_zone(std::string_view name);

/// Raw zoning code -> category. Exact codes win over prefix patterns
/// written as "CODE*"; among prefixes the longest match wins.
class ZoneMapping {
 public:
  ZoneMapping() = default;

  /// Two columns per line: raw code, category. '#' starts a comment.
  static ZoneMapping load(const std::filesystem::path& file);
  static ZoneMapping parse(std::string_view text, std::string_view origin = "<memory>");

  void add(std::string code, ZoneCategory category);
  ZoneCategory standardize(std::string_view raw) const;
  std::size_t size() const { return exact_.size() + prefixes_.size(); }

 private:
  std::map<std::string, ZoneCategory, std::less<>> exact_;
  std::vector<std::pair<std::string, ZoneCategory>> prefixes_;
};

ZoneCategory standardize_zone(std::string_view raw, const ZoneMapping& mapping);

struct RoadSegment {
  std::uint32_t id = 0;
  std::string source_id;
  geo::Polyline line;
};

struct RoadNetwork {
  std::vector<RoadSegment> segments;

  double total_length_m() const;
  double total_length_km() const { return total_length_m() / 1000.0; }
  bool empty() const { return segments.empty(); }
};

struct Footprint {
  std::uint32_t id = 0;
  geo::Polygon shape;
};

struct Parcel {
  std::uint32_t id = 0;
  geo::Polygon shape;
  std::string zone_code;
  ZoneCategory zone = ZoneCategory::unknown;
};

struct BlockGroup {
  std::uint32_t id = 0;
  geo::Polygon shape;
  std::string geoid;
  double minority_share = 0.0;
};

/// Everything the later stages need for one city, in local coordinates.
struct CityBundle {
  std::string city;
  geo::GeoPoint origin;
  std::vector<geo::Polygon> boundary;
  RoadNetwork roads;
  std::vector<Footprint> footprints;
  std::vector<Parcel> parcels;
  std::vector<BlockGroup> blockgroups;
  /// No footprint layer was supplied; coverage falls back to an imputed mean.
  bool impute_coverage = false;

  geo::Projection projection() const { return geo::Projection(origin); }
};

struct CityFiles {
  std::filesystem::path roads;
  std::filesystem::path boundary;
  /// Empty paths mark layers the city does not have.
  std::filesystem::path footprints;
  std::filesystem::path parcels;
  std::filesystem::path blockgroups;
  std::filesystem::path zone_mapping;
};

/// Loads, projects and clips every layer. Throws DataError naming the file
/// (and feature index) on missing or malformed input.
CityBundle load_city(std::string city, const CityFiles& files);

/// Splits each road at boundary crossings and keeps only the inside pieces.
RoadNetwork clip_network(const RoadNetwork& network, const std::vector<geo::Polygon>& boundary);

/// Lines and polygons decoded from a feature-collection document.
struct RawFeature {
  std::size_t index = 0;
  std::string id;
  std::vector<std::vector<geo::GeoPoint>> lines;
  /// Each polygon: exterior followed by holes.
  std::vector<std::vector<std::vector<geo::GeoPoint>>> polygons;
  std::map<std::string, std::string, std::less<>> string_props;
  std::map<std::string, double, std::less<>> number_props;
};

std::vector<RawFeature> parse_feature_collection(std::string_view text, std::string_view origin);
std::vector<RawFeature> read_feature_collection(const std::filesystem::path& file);

void save_bundle(const CityBundle& bundle, const std::filesystem::path& file);
CityBundle load_bundle(const std::filesystem::path& file);

}  // namespace streetcam::ingest
