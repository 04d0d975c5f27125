#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "streetcam/analysis.hpp"
#include "streetcam/coverage.hpp"
#include "streetcam/detect.hpp"
#include "streetcam/imagery.hpp"
#include "streetcam/ingest.hpp"
#include "streetcam/sampler.hpp"
#include "streetcam/verify.hpp"

namespace streetcam::pipeline {

std::string_view version();

/// Every tunable constant of a run. Stored as "key = value" lines; '#'
/// starts a comment.
struct PipelineConfig {
  std::uint64_t seed = 1;
  std::size_t n_per_city = 100'000;
  double prob_threshold = 0.75;
  std::size_t size_threshold = 50;
  double recall = 0.63;
  double availability_radius_m = 10.0;
  double building_cutoff_m = 30.0;
  double imputed_mean_d_m = 29.0;
  std::string date_policy = "oldest-in-range:2015-2021";
  std::string endpoint_url = "http://127.0.0.1:8765";
  std::string endpoint_metadata_path = "/metadata";
  std::string endpoint_image_path = "/image";
  double requests_per_second = 10.0;
  int retries = 3;
  int fov = 90;
  int image_size = 640;
  std::size_t fetch_workers = 4;
  std::size_t quorum = 3;

  /// Throws UsageError for an unknown key or unparsable value.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  /// Throws UsageError naming the first offending key.
  void validate() const;

  /// Canonical text; parse(to_text()) reproduces the config exactly.
  std::string to_text() const;
  static PipelineConfig parse(std::string_view text, std::string_view origin = "<memory>");
  static PipelineConfig load(const std::filesystem::path& file);
  std::string hash() const;

  detect::ExtractOptions extract_options() const { return {prob_threshold, size_threshold}; }
  imagery::ClientConfig client_config() const;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

/// Provenance record written next to a stage's outputs as
/// "<primary output>.manifest.json".
struct Manifest {
  std::string stage;
  std::string config_hash;
  std::string config_text;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256
  std::string status = "complete";             // or "failed"
  std::string error;

  void add_input(const std::filesystem::path& p);
  void add_output(const std::filesystem::path& p);
  std::string to_json() const;
};

std::filesystem::path manifest_path(const std::filesystem::path& primary_output);
void write_manifest(const Manifest& m, const std::filesystem::path& primary_output);

/// Availability filtering and image download for one city. Points without
/// imagery are replaced by fresh draws; capture locations are recorded.
struct FetchResult {
  std::vector<sampler::SamplePoint> points;
  std::vector<imagery::ImageRecord> images;
  std::size_t draws = 0;
  std::size_t rejected = 0;
};
FetchResult fetch_city(const ingest::CityBundle& bundle, std::vector<sampler::SamplePoint> points,
                       const PipelineConfig& cfg, const std::filesystem::path& cache_root);

std::string to_jsonl(const imagery::ImageRecord& r);
void write_images(std::span<const imagery::ImageRecord> images, const std::filesystem::path& file);
std::vector<imagery::ImageRecord> read_images(const std::filesystem::path& file);

/// Instances from every "*.prob" map in a directory (sorted by file name).
std::vector<detect::DetectionInstance> import_probability_maps(const std::filesystem::path& dir,
                                                               const detect::ExtractOptions& opts);

/// Coverage records for a city's sample; imputes when the city has no
/// footprints.
std::vector<coverage::CoverageRecord> city_coverage_records(const ingest::CityBundle& bundle,
                                                            std::span<const sampler::SamplePoint> samples,
                                                            const PipelineConfig& cfg);

/// One analysis row per included sample; `detected` marks images with at
/// least one verified detection.
std::vector<analysis::AnalysisRow> analysis_rows(const ingest::CityBundle& bundle,
                                                 std::span<const sampler::SamplePoint> samples,
                                                 std::span<const coverage::CoverageRecord> coverage,
                                                 std::span<const verify::VerifiedDetection> verified);

}  // namespace streetcam::pipeline
