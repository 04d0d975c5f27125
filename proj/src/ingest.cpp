#include "streetcam/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <cereal/archives/portable_binary.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/vector.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "streetcam/error.hpp"

namespace streetcam::ingest {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& file, std::string_view what) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + std::string(what) + " file: " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

geo::GeoPoint position(const json& j) {
  if (!j.is_array() || j.size() < 2 || !j[0].is_number() || !j[1].is_number()) {
    throw std::invalid_argument("bad position");
  }
  geo::GeoPoint p{j[1].get<double>(), j[0].get<double>()};
  if (!p.valid()) throw std::invalid_argument("position out of WGS84 range");
  return p;
}

std::vector<geo::GeoPoint> positions(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("bad coordinate list");
  std::vector<geo::GeoPoint> out;
  out.reserve(j.size());
  for (const auto& p : j) out.push_back(position(p));
  return out;
}

std::vector<std::vector<geo::GeoPoint>> rings(const json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("polygon without rings");
  std::vector<std::vector<geo::GeoPoint>> out;
  for (const auto& r : j) {
    auto ring = positions(r);
    if (ring.size() < 3) throw std::invalid_argument("ring with fewer than three positions");
    out.push_back(std::move(ring));
  }
  return out;
}

void decode_geometry(const json& g, RawFeature& f) {
  if (g.is_null()) return;
  const std::string type = g.at("type").get<std::string>();
  if (type == "GeometryCollection") {
    for (const auto& sub : g.at("geometries")) decode_geometry(sub, f);
    return;
  }
  const json& c = g.at("coordinates");
  if (type == "LineString") {
    f.lines.push_back(positions(c));
  } else if (type == "MultiLineString") {
    for (const auto& l : c) f.lines.push_back(positions(l));
  } else if (type == "Polygon") {
    f.polygons.push_back(rings(c));
  } else if (type == "MultiPolygon") {
    for (const auto& p : c) f.polygons.push_back(rings(p));
  } else if (type == "Point" || type == "MultiPoint") {
    // Points carry no length or area; ignored.
  } else {
    throw std::invalid_argument("unsupported geometry type " + type);
  }
}

geo::Polygon to_local(const std::vector<std::vector<geo::GeoPoint>>& poly,
                      const geo::Projection& proj) {
  auto ring = [&](const std::vector<geo::GeoPoint>& r) {
    geo::Ring out;
    out.reserve(r.size());
    for (const auto& p : r) out.push_back(proj.project(p));
    return out;
  };
  std::vector<geo::Ring> holes;
  for (std::size_t i = 1; i < poly.size(); ++i) holes.push_back(ring(poly[i]));
  return geo::Polygon(ring(poly[0]), std::move(holes));
}

geo::GeoPoint centroid(const std::vector<RawFeature>& boundary) {
  // Area-weighted centroid of the exterior rings in degree space; the city
  // is small enough that this is a fine projection origin.
  double a_sum = 0.0, cx = 0.0, cy = 0.0;
  std::size_t n = 0;
  double mx = 0.0, my = 0.0;
  for (const auto& f : boundary) {
    for (const auto& poly : f.polygons) {
      const auto& r = poly[0];
      for (std::size_t i = 0; i < r.size(); ++i) {
        const auto& p = r[i];
        const auto& q = r[(i + 1) % r.size()];
        const double w = p.lon * q.lat - q.lon * p.lat;
        a_sum += w;
        cx += (p.lon + q.lon) * w;
        cy += (p.lat + q.lat) * w;
        mx += p.lon;
        my += p.lat;
        ++n;
      }
    }
  }
  if (n == 0) throw DataError("boundary has no polygon");
  if (std::abs(a_sum) < 1e-18) return {my / n, mx / n};
  return {cy / (3.0 * a_sum), cx / (3.0 * a_sum)};
}

bool touches_boundary(const geo::Polygon& poly, const std::vector<geo::Polygon>& boundary) {
  for (const auto& b : boundary) {
    if (!poly.bbox().intersects(b.bbox())) continue;
    for (const auto& v : poly.exterior()) {
      if (geo::point_in_polygon(v, b)) return true;
    }
    for (const auto& v : b.exterior()) {
      if (geo::point_in_polygon(v, poly)) return true;
    }
  }
  return false;
}

std::vector<RawFeature> read_layer(const fs::path& file, std::string_view what) {
  const std::string text = read_file(file, what);
  return parse_feature_collection(text, file.string());
}

}  // namespace

std::string_view to_string(ZoneCategory z) {
  switch (z) {
    case ZoneCategory::mixed: return "mixed";
    case ZoneCategory::industrial: return "industrial";
    case ZoneCategory::commercial: return "commercial";
    case ZoneCategory::public_: return "public";
    case ZoneCategory::residential: return "residential";
    case ZoneCategory::unknown: return "unknown";
  }
  return "unknown";
}

std::optional<ZoneCategory> parse_zone(std::string_view name) {
  for (auto z : {ZoneCategory::mixed, ZoneCategory::industrial, ZoneCategory::commercial,
                 ZoneCategory::public_, ZoneCategory::residential, ZoneCategory::unknown}) {
    if (to_string(z) == name) return z;
  }
  return std::nullopt;
}

ZoneMapping ZoneMapping::load(const fs::path& file) {
  return parse(read_file(file, "zone mapping"), file.string());
}

ZoneMapping ZoneMapping::parse(std::string_view text, std::string_view origin) {
  ZoneMapping m;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    // Code and category are separated by a tab or by the last run of spaces.
    std::size_t split = t.find('\t');
    if (split == std::string::npos) split = t.find_last_of(' ');
    if (split == std::string::npos) {
      throw DataError(std::string(origin) + ":" + std::to_string(line_no) + ": expected two columns");
    }
    std::string code = trim(t.substr(0, split));
    const std::string cat = trim(t.substr(split + 1));
    auto z = parse_zone(cat);
    if (!z) {
      throw DataError(std::string(origin) + ":" + std::to_string(line_no) + ": unknown category '" +
                      cat + "'");
    }
    m.add(std::move(code), *z);
  }
  return m;
}

void ZoneMapping::add(std::string code, ZoneCategory category) {
  if (!code.empty() && code.back() == '*') {
    code.pop_back();
    prefixes_.emplace_back(std::move(code), category);
    std::stable_sort(prefixes_.begin(), prefixes_.end(),
                     [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
  } else {
    exact_[std::move(code)] = category;
  }
}

ZoneCategory ZoneMapping::standardize(std::string_view raw) const {
  const std::string code = trim(raw);
  if (code.empty()) return ZoneCategory::unknown;
  if (auto it = exact_.find(code); it != exact_.end()) return it->second;
  for (const auto& [prefix, cat] : prefixes_) {
    if (code.starts_with(prefix)) return cat;
  }
  return ZoneCategory::unknown;
}

ZoneCategory standardize_zone(std::string_view raw, const ZoneMapping& mapping) {
  return mapping.standardize(raw);
}

double RoadNetwork::total_length_m() const {
  double sum = 0.0;
  for (const auto& s : segments) sum += s.line.length();
  return sum;
}

std::vector<RawFeature> parse_feature_collection(std::string_view text, std::string_view origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string(origin) + ": not valid JSON: " + e.what());
  }
  std::vector<json> features;
  const std::string type = doc.value("type", "");
  if (type == "FeatureCollection") {
    if (!doc.contains("features") || !doc["features"].is_array()) {
      throw DataError(std::string(origin) + ": FeatureCollection without a features array");
    }
    features = doc["features"].get<std::vector<json>>();
  } else if (type == "Feature") {
    features.push_back(doc);
  } else if (!type.empty()) {
    features.push_back(json{{"type", "Feature"}, {"geometry", doc}, {"properties", json::object()}});
  } else {
    throw DataError(std::string(origin) + ": not a feature collection");
  }

  std::vector<RawFeature> out;
  out.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const json& f = features[i];
    RawFeature raw;
    raw.index = i;
    try {
      if (f.contains("id")) raw.id = f["id"].is_string() ? f["id"].get<std::string>() : f["id"].dump();
      decode_geometry(f.at("geometry"), raw);
      if (f.contains("properties") && f["properties"].is_object()) {
        for (const auto& [k, v] : f["properties"].items()) {
          if (v.is_string()) {
            raw.string_props[k] = v.get<std::string>();
          } else if (v.is_number()) {
            raw.number_props[k] = v.get<double>();
            raw.string_props[k] = v.dump();
          }
        }
      }
    } catch (const std::exception& e) {
      throw DataError(std::string(origin) + ": feature " + std::to_string(i) + ": " + e.what());
    }
    if (raw.id.empty()) {
      if (auto it = raw.string_props.find("id"); it != raw.string_props.end()) raw.id = it->second;
    }
    out.push_back(std::move(raw));
  }
  return out;
}

std::vector<RawFeature> read_feature_collection(const fs::path& file) {
  return read_layer(file, "feature");
}

RoadNetwork clip_network(const RoadNetwork& network, const std::vector<geo::Polygon>& boundary) {
  RoadNetwork out;
  for (const auto& seg : network.segments) {
    std::size_t piece = 0;
    for (const auto& b : boundary) {
      if (!seg.line.bbox().intersects(b.bbox())) continue;
      for (auto& part : geo::clip_polyline(seg.line, b)) {
        if (part.length() <= 0.0) continue;
        RoadSegment s;
        s.id = static_cast<std::uint32_t>(out.segments.size());
        s.source_id = piece == 0 ? seg.source_id : seg.source_id + "#" + std::to_string(piece);
        s.line = std::move(part);
        out.segments.push_back(std::move(s));
        ++piece;
      }
    }
  }
  return out;
}

CityBundle load_city(std::string city, const CityFiles& files) {
  for (const auto* p : {&files.roads, &files.boundary, &files.footprints, &files.parcels,
                        &files.blockgroups, &files.zone_mapping}) {
    if (!p->empty() && !fs::exists(*p)) throw DataError("missing input file: " + p->string());
  }
  if (files.roads.empty()) throw DataError("a roads file is required");
  if (files.boundary.empty()) throw DataError("a boundary file is required");

  CityBundle b;
  b.city = std::move(city);

  const auto boundary_raw = read_layer(files.boundary, "boundary");
  b.origin = centroid(boundary_raw);
  const geo::Projection proj(b.origin);
  for (const auto& f : boundary_raw) {
    for (const auto& poly : f.polygons) b.boundary.push_back(to_local(poly, proj));
  }

  RoadNetwork raw_roads;
  for (const auto& f : read_layer(files.roads, "roads")) {
    std::size_t part = 0;
    for (const auto& line : f.lines) {
      std::vector<geo::LocalPoint> pts;
      for (const auto& p : line) pts.push_back(proj.project(p));
      if (pts.size() < 2) {
        throw DataError(files.roads.string() + ": feature " + std::to_string(f.index) +
                        ": line with fewer than two positions");
      }
      RoadSegment s;
      s.source_id = f.id.empty() ? std::to_string(f.index) : f.id;
      if (part > 0) s.source_id += "." + std::to_string(part);
      s.line = geo::Polyline(std::move(pts));
      raw_roads.segments.push_back(std::move(s));
      ++part;
    }
  }
  b.roads = clip_network(raw_roads, b.boundary);

  if (files.footprints.empty()) {
    b.impute_coverage = true;
  } else {
    for (const auto& f : read_layer(files.footprints, "footprints")) {
      for (const auto& poly : f.polygons) {
        auto shape = to_local(poly, proj);
        if (!touches_boundary(shape, b.boundary)) continue;
        b.footprints.push_back({static_cast<std::uint32_t>(b.footprints.size()), std::move(shape)});
      }
    }
  }

  ZoneMapping mapping;
  if (!files.zone_mapping.empty()) mapping = ZoneMapping::load(files.zone_mapping);
  if (!files.parcels.empty()) {
    for (const auto& f : read_layer(files.parcels, "parcels")) {
      std::string code;
      for (const char* key : {"zone", "zoning", "zone_code", "ZONING"}) {
        if (auto it = f.string_props.find(key); it != f.string_props.end()) {
          code = it->second;
          break;
        }
      }
      for (const auto& poly : f.polygons) {
        auto shape = to_local(poly, proj);
        if (!touches_boundary(shape, b.boundary)) continue;
        Parcel p;
        p.id = static_cast<std::uint32_t>(b.parcels.size());
        p.shape = std::move(shape);
        p.zone_code = code;
        p.zone = mapping.standardize(code);
        b.parcels.push_back(std::move(p));
      }
    }
  }

  if (!files.blockgroups.empty()) {
    for (const auto& f : read_layer(files.blockgroups, "blockgroups")) {
      auto share = f.number_props.find("minority_share");
      if (share == f.number_props.end()) {
        throw DataError(files.blockgroups.string() + ": feature " + std::to_string(f.index) +
                        ": missing numeric minority_share");
      }
      if (!(share->second >= 0.0 && share->second <= 1.0)) {
        throw DataError(files.blockgroups.string() + ": feature " + std::to_string(f.index) +
                        ": minority_share outside [0, 1]");
      }
      for (const auto& poly : f.polygons) {
        auto shape = to_local(poly, proj);
        if (!touches_boundary(shape, b.boundary)) continue;
        BlockGroup g;
        g.id = static_cast<std::uint32_t>(b.blockgroups.size());
        g.shape = std::move(shape);
        g.geoid = f.id;
        g.minority_share = share->second;
        b.blockgroups.push_back(std::move(g));
      }
    }
  }

  spdlog::info("{}: {} road pieces ({:.3f} km), {} footprints, {} parcels, {} block groups", b.city,
               b.roads.segments.size(), b.roads.total_length_km(), b.footprints.size(),
               b.parcels.size(), b.blockgroups.size());
  return b;
}

}  // namespace streetcam::ingest

// Bundle serialisation. Geometry classes are rebuilt through their
// constructors on load so cached lengths and boxes stay consistent.
namespace streetcam::geo {

template <class Archive>
void serialize(Archive& ar, GeoPoint& p) {
  ar(p.lat, p.lon);
}

template <class Archive>
void serialize(Archive& ar, LocalPoint& p) {
  ar(p.x, p.y);
}

template <class Archive>
void save(Archive& ar, const Polyline& l) {
  ar(l.vertices());
}

template <class Archive>
void load(Archive& ar, Polyline& l) {
  std::vector<LocalPoint> v;
  ar(v);
  l = Polyline(std::move(v));
}

template <class Archive>
void save(Archive& ar, const Polygon& p) {
  ar(p.exterior(), p.holes());
}

template <class Archive>
void load(Archive& ar, Polygon& p) {
  Ring ext;
  std::vector<Ring> holes;
  ar(ext, holes);
  p = Polygon(std::move(ext), std::move(holes));
}

}  // namespace streetcam::geo

namespace streetcam::ingest {

template <class Archive>
void serialize(Archive& ar, RoadSegment& s) {
  ar(s.id, s.source_id, s.line);
}

template <class Archive>
void serialize(Archive& ar, Footprint& f) {
  ar(f.id, f.shape);
}

template <class Archive>
void serialize(Archive& ar, Parcel& p) {
  ar(p.id, p.shape, p.zone_code, p.zone);
}

template <class Archive>
void serialize(Archive& ar, BlockGroup& g) {
  ar(g.id, g.shape, g.geoid, g.minority_share);
}

namespace {
constexpr std::uint32_t kBundleMagic = 0x53434231;  // "SCB1"
}

void save_bundle(const CityBundle& b, const fs::path& file) {
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write bundle: " + file.string());
    cereal::PortableBinaryOutputArchive ar(out);
    ar(kBundleMagic, b.city, b.origin, b.boundary, b.roads.segments, b.footprints, b.parcels,
       b.blockgroups, b.impute_coverage);
  }
  fs::rename(tmp, file);
}

CityBundle load_bundle(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open bundle: " + file.string());
  CityBundle b;
  std::uint32_t magic = 0;
  try {
    cereal::PortableBinaryInputArchive ar(in);
    ar(magic);
    if (magic != kBundleMagic) throw DataError("not a city bundle: " + file.string());
    ar(b.city, b.origin, b.boundary, b.roads.segments, b.footprints, b.parcels, b.blockgroups,
       b.impute_coverage);
  } catch (const cereal::Exception& e) {
    throw DataError("corrupt bundle " + file.string() + ": " + e.what());
  }
  return b;
}

}  // namespace streetcam::ingest
