#include "streetcam/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <functional>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "streetcam/error.hpp"
#include "streetcam/io.hpp"
#include "streetcam/rng.hpp"

#ifndef STREETCAM_VERSION
#define STREETCAM_VERSION "0.0.0"
#endif

namespace streetcam::pipeline {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string_view version() { return STREETCAM_VERSION; }

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size()) {
    throw UsageError(fmt::format("config key {}: cannot parse '{}'", key, v));
  }
  return out;
}

struct Field {
  std::function<void(PipelineConfig&, std::string_view)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename T>
Field number_field(T PipelineConfig::*member, std::string_view key) {
  return {[member, key](PipelineConfig& c, std::string_view v) { c.*member = parse_number<T>(key, v); },
          [member](const PipelineConfig& c) { return fmt::format("{}", c.*member); }};
}

Field string_field(std::string PipelineConfig::*member) {
  return {[member](PipelineConfig& c, std::string_view v) { c.*member = std::string(v); },
          [member](const PipelineConfig& c) { return c.*member; }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  using C = PipelineConfig;
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", number_field(&C::seed, "seed")},
      {"n_per_city", number_field(&C::n_per_city, "n_per_city")},
      {"prob_threshold", number_field(&C::prob_threshold, "prob_threshold")},
      {"size_threshold", number_field(&C::size_threshold, "size_threshold")},
      {"recall", number_field(&C::recall, "recall")},
      {"availability_radius_m", number_field(&C::availability_radius_m, "availability_radius_m")},
      {"building_cutoff_m", number_field(&C::building_cutoff_m, "building_cutoff_m")},
      {"imputed_mean_d_m", number_field(&C::imputed_mean_d_m, "imputed_mean_d_m")},
      {"date_policy", string_field(&C::date_policy)},
      {"endpoint_url", string_field(&C::endpoint_url)},
      {"endpoint_metadata_path", string_field(&C::endpoint_metadata_path)},
      {"endpoint_image_path", string_field(&C::endpoint_image_path)},
      {"requests_per_second", number_field(&C::requests_per_second, "requests_per_second")},
      {"retries", number_field(&C::retries, "retries")},
      {"fov", number_field(&C::fov, "fov")},
      {"image_size", number_field(&C::image_size, "image_size")},
      {"fetch_workers", number_field(&C::fetch_workers, "fetch_workers")},
      {"quorum", number_field(&C::quorum, "quorum")},
  };
  return table;
}

const Field& field(std::string_view key) {
  for (const auto& [k, f] : fields()) {
    if (k == key) return f;
  }
  throw UsageError(fmt::format("unknown config key '{}'", key));
}

}  // namespace

void PipelineConfig::set(std::string_view key, std::string_view value) { field(key).set(*this, trim(value)); }

std::string PipelineConfig::get(std::string_view key) const { return field(key).get(*this); }

const std::vector<std::string>& PipelineConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [name, f] : fields()) out.push_back(name);
    return out;
  }();
  return k;
}

void PipelineConfig::validate() const {
  auto fail = [](std::string_view key, std::string_view rule) {
    throw UsageError(fmt::format("config key {} must be {}", key, rule));
  };
  if (n_per_city < 1) fail("n_per_city", ">= 1");
  if (!(prob_threshold > 0.0 && prob_threshold < 1.0)) fail("prob_threshold", "in (0, 1)");
  if (!(recall > 0.0 && recall <= 1.0)) fail("recall", "in (0, 1]");
  if (!(availability_radius_m > 0.0)) fail("availability_radius_m", "> 0");
  if (!(building_cutoff_m > 0.0)) fail("building_cutoff_m", "> 0");
  if (!(imputed_mean_d_m > 0.0)) fail("imputed_mean_d_m", "> 0");
  if (retries < 0) fail("retries", ">= 0");
  if (fov <= 0 || fov > 180) fail("fov", "in (0, 180]");
  if (image_size <= 0) fail("image_size", "> 0");
  if (fetch_workers < 1) fail("fetch_workers", ">= 1");
  if (quorum < 1) fail("quorum", ">= 1");
  if (endpoint_url.empty()) fail("endpoint_url", "non-empty");
  try {
    imagery::DatePolicy::parse(date_policy);
  } catch (const UsageError& e) {
    throw UsageError(fmt::format("config key date_policy: {}", e.what()));
  }
}

std::string PipelineConfig::to_text() const {
  std::string out;
  for (const auto& [k, f] : fields()) out += fmt::format("{} = {}\n", k, f.get(*this));
  return out;
}

PipelineConfig PipelineConfig::parse(std::string_view text, std::string_view origin) {
  PipelineConfig cfg;
  std::size_t lineno = 0;
  while (!text.empty()) {
    ++lineno;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw UsageError(fmt::format("{}:{}: expected key = value", origin, lineno));
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const UsageError& e) {
      throw UsageError(fmt::format("{}:{}: {}", origin, lineno, e.what()));
    }
  }
  return cfg;
}

PipelineConfig PipelineConfig::load(const fs::path& file) {
  if (!fs::exists(file)) throw UsageError("config file not found: " + file.string());
  return parse(io::read_file(file), file.string());
}

std::string PipelineConfig::hash() const { return io::sha256_hex(to_text()); }

imagery::ClientConfig PipelineConfig::client_config() const {
  imagery::ClientConfig c;
  c.base_url = endpoint_url;
  c.metadata_path = endpoint_metadata_path;
  c.image_path = endpoint_image_path;
  c.radius_m = availability_radius_m;
  c.fov = fov;
  c.size = image_size;
  c.requests_per_second = requests_per_second;
  c.retries = retries;
  return c;
}

void Manifest::add_input(const fs::path& p) { inputs[p.string()] = io::sha256_file(p); }
void Manifest::add_output(const fs::path& p) { outputs[p.string()] = io::sha256_file(p); }

std::string Manifest::to_json() const {
  const auto now = std::chrono::system_clock::now();
  json j = {{"stage", stage},
            {"status", status},
            {"version", version()},
            {"config_sha256", config_hash},
            {"config", config_text},
            {"inputs", inputs},
            {"outputs", outputs},
            {"created_unix", std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count()}};
  if (!error.empty()) j["error"] = error;
  return j.dump(2) + "\n";
}

fs::path manifest_path(const fs::path& primary_output) {
  fs::path p = primary_output;
  p += ".manifest.json";
  return p;
}

void write_manifest(const Manifest& m, const fs::path& primary_output) {
  io::write_file_atomic(manifest_path(primary_output), m.to_json());
}

FetchResult fetch_city(const ingest::CityBundle& bundle, std::vector<sampler::SamplePoint> points,
                       const PipelineConfig& cfg, const fs::path& cache_root) {
  imagery::ImageryClient client(cfg.client_config());
  imagery::ImageCache cache(cache_root, bundle.city, client, imagery::DatePolicy::parse(cfg.date_policy));
  const auto projection = bundle.projection();
  sampler::RoadSampler road_sampler(bundle.roads, projection);
  Rng rng = Rng::substream(cfg.seed, "replace:" + bundle.city);

  auto avail = sampler::apply_availability(std::move(points), cache.oracle(projection), road_sampler, rng);
  FetchResult out;
  out.draws = avail.draws;
  out.rejected = avail.rejected;
  out.points = std::move(avail.points);
  out.images = imagery::fetch_all(cache, out.points, cfg.fetch_workers);
  spdlog::info("{}: {} images fetched, {} points replaced for lack of imagery", bundle.city, out.images.size(),
               out.rejected);
  return out;
}

std::string to_jsonl(const imagery::ImageRecord& r) {
  return json{{"image_id", r.image_id},
              {"sample_id", r.sample_id},
              {"pano_id", r.pano_id},
              {"lat", r.capture.lat},
              {"lon", r.capture.lon},
              {"date", r.date},
              {"heading", r.heading},
              {"width", r.width},
              {"height", r.height},
              {"cache_path", r.cache_path.string()},
              {"source", imagery::to_string(r.source)}}
      .dump();
}

void write_images(std::span<const imagery::ImageRecord> images, const fs::path& file) {
  io::AtomicWriter w(file);
  for (const auto& r : images) w.stream() << to_jsonl(r) << '\n';
  w.commit();
}

std::vector<imagery::ImageRecord> read_images(const fs::path& file) {
  std::vector<imagery::ImageRecord> out;
  io::for_each_line(file, [&](std::string_view line, std::size_t lineno) {
    try {
      const json j = json::parse(line);
      imagery::ImageRecord r;
      r.image_id = j.at("image_id").get<std::string>();
      r.sample_id = j.at("sample_id").get<std::uint64_t>();
      r.pano_id = j.at("pano_id").get<std::string>();
      r.capture = {j.at("lat").get<double>(), j.at("lon").get<double>()};
      r.date = j.value("date", "");
      r.heading = j.at("heading").get<double>();
      r.width = j.value("width", 640);
      r.height = j.value("height", 640);
      r.cache_path = j.value("cache_path", "");
      const std::string src = j.value("source", "live");
      r.source = src == "fixture" ? imagery::Source::fixture
                 : src == "synthetic" ? imagery::Source::synthetic
                                      : imagery::Source::live;
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(fmt::format("{}:{}: {}", file.string(), lineno, e.what()));
    }
  });
  return out;
}

std::vector<detect::DetectionInstance> import_probability_maps(const fs::path& dir,
                                                               const detect::ExtractOptions& opts) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".prob") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<detect::DetectionInstance> out;
  for (const auto& f : files) {
    const auto map = detect::read_probability_map(f);
    for (auto& inst : detect::extract_instances(map, opts)) out.push_back(std::move(inst));
  }
  return out;
}

std::vector<coverage::CoverageRecord> city_coverage_records(const ingest::CityBundle& bundle,
                                                            std::span<const sampler::SamplePoint> samples,
                                                            const PipelineConfig& cfg) {
  if (bundle.impute_coverage) {
    std::vector<std::uint64_t> ids;
    for (const auto& s : samples) ids.push_back(s.id);
    return coverage::impute_coverage(bundle, ids, cfg.imputed_mean_d_m);
  }
  const coverage::FootprintLocator locator(bundle.footprints);
  std::vector<coverage::CoverageRecord> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    out.push_back(coverage::image_coverage(s.id, s.capture_point(), locator, cfg.building_cutoff_m));
  }
  return out;
}

std::vector<analysis::AnalysisRow> analysis_rows(const ingest::CityBundle& bundle,
                                                 std::span<const sampler::SamplePoint> samples,
                                                 std::span<const coverage::CoverageRecord> coverage,
                                                 std::span<const verify::VerifiedDetection> verified) {
  std::set<std::uint64_t> included;
  for (const auto& c : coverage) {
    if (c.included) included.insert(c.sample_id);
  }
  std::set<std::string, std::less<>> positive;
  for (const auto& v : verified) {
    if (v.verified) positive.insert(v.image_id);
  }
  const analysis::ZoneAssigner zones(bundle.parcels);
  const analysis::DemographicAssigner groups(bundle.blockgroups);
  std::vector<analysis::AnalysisRow> rows;
  for (const auto& s : samples) {
    if (!included.contains(s.id)) continue;
    analysis::AnalysisRow r;
    r.sample_id = s.id;
    r.city = bundle.city;
    r.detected = !s.image_id.empty() && positive.contains(s.image_id) ? 1 : 0;
    r.zone = analysis::assign_zone(s.capture_point(), zones);
    r.minority_share = analysis::assign_demographics(s.capture_point(), groups);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace streetcam::pipeline
