#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "streetcam/geo.hpp"
#include "streetcam/sampler.hpp"

namespace streetcam::imagery {

/// Transport or endpoint failure; distinct from "no imagery here".
class RetryableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A fetch that still failed after all retries.
class FetchError : public std::runtime_error {
 public:
  FetchError(std::uint64_t point_id, const std::string& what)
      : std::runtime_error("point " + std::to_string(point_id) + ": " + what), point_id(point_id) {}
  std::uint64_t point_id;
};

inline constexpr double kAvailabilityRadiusM = 10.0;

struct Panorama {
  std::string pano_id;
  geo::GeoPoint location;
  std::string date;  // "YYYY-MM" or "YYYY"
  double distance_m = 0.0;

  int year() const;
};

enum class DateRule { oldest_in_range, oldest, newest };

struct DatePolicy {
  DateRule rule = DateRule::oldest_in_range;
  int from_year = 2015;
  int to_year = 2021;

  std::string key() const;
  /// "oldest-in-range:2015-2021", "oldest", "newest".
  static DatePolicy parse(std::string_view text);
};

std::optional<Panorama> select_panorama(const std::vector<Panorama>& candidates, const DatePolicy& policy);

enum class Source { live, fixture, synthetic };
std::string_view to_string(Source s);

struct ImageRecord {
  std::string image_id;
  std::uint64_t sample_id = 0;
  std::string pano_id;
  geo::GeoPoint capture;
  std::string date;
  double heading = 0.0;
  int width = 640;
  int height = 640;
  std::filesystem::path cache_path;
  Source source = Source::live;
};

/// Token bucket; rate <= 0 disables limiting.
class RateLimiter {
 public:
  explicit RateLimiter(double per_second = 10.0, double burst = 1.0);
  void acquire();

 private:
  std::mutex mutex_;
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

struct ClientConfig {
  /// "http://host:port" (or https when built with TLS support).
  std::string base_url = "http://127.0.0.1:8765";
  std::string metadata_path = "/metadata";
  std::string image_path = "/image";
  /// Defaults to $STREETCAM_API_KEY.
  std::string api_key;
  double radius_m = kAvailabilityRadiusM;
  /// Horizontal field of view requested from the endpoint, degrees.
  int fov = 90;
  int size = 640;
  double requests_per_second = 10.0;
  int retries = 3;
  std::chrono::milliseconds backoff{200};
  std::chrono::seconds timeout{10};
  Source source = Source::live;
};

/// Client for a static street-level imagery endpoint:
///   GET {metadata_path}?location=<lat>,<lon>&radius=<m>&key=<k>
///     -> {"status": "OK" | "ZERO_RESULTS",
///         "panoramas": [{"pano_id", "location": {"lat", "lng"}, "date"}]}
///   GET {image_path}?pano=<id>&heading=<deg>&fov=<deg>&pitch=0&size=<w>x<h>&key=<k>
///     -> image bytes
class ImageryClient {
 public:
  explicit ImageryClient(ClientConfig cfg);
  ~ImageryClient();

  /// Panoramas within the availability radius, nearest first. Throws
  /// RetryableError on transport or server failure.
  std::vector<Panorama> panoramas_near(geo::GeoPoint p);
  std::string image_bytes(const std::string& pano_id, double heading);

  const ClientConfig& config() const { return cfg_; }
  std::size_t requests() const { return requests_.load(); }

 private:
  std::string get(const std::string& path_and_query);

  ClientConfig cfg_;
  RateLimiter limiter_;
  std::atomic<std::size_t> requests_{0};
  struct Transport;
  std::unique_ptr<Transport> transport_;
};

struct Availability {
  bool available = false;
  std::optional<Panorama> panorama;
};

/// Availability lookups and image downloads with an on-disk cache:
///   <root>/<city>/<pano id>_<heading>.png   image
///   <root>/<city>/<pano id>_<heading>.json  sidecar metadata
///   <root>/<city>/meta/<lat>_<lon>_<policy>.json  availability answer
/// Files are written to a temporary name and renamed, so concurrent writers
/// never expose partial files.
class ImageCache {
 public:
  ImageCache(std::filesystem::path root, std::string city, ImageryClient& client, DatePolicy policy = {});

  Availability check_availability(geo::GeoPoint p);
  /// Throws FetchError after bounded retries, DataError on cache write failure.
  ImageRecord fetch_image(const sampler::SamplePoint& point);

  /// Oracle for sampler::apply_availability using this cache.
  sampler::AvailabilityOracle oracle(const geo::Projection& projection);

  std::filesystem::path city_dir() const { return root_ / city_; }
  const DatePolicy& policy() const { return policy_; }

 private:
  std::filesystem::path meta_path(geo::GeoPoint p) const;

  std::filesystem::path root_;
  std::string city_;
  ImageryClient* client_;
  DatePolicy policy_;
};

/// Fetches every point with up to `workers` concurrent downloads; updates
/// status and image id in place. Returns the records in point order.
std::vector<ImageRecord> fetch_all(ImageCache& cache, std::vector<sampler::SamplePoint>& points,
                                   std::size_t workers = 4);

std::string heading_tag(double heading);

/// Test/demo endpoint serving panoramas from a manifest:
///   {"panoramas": [{"pano_id", "lat", "lon", "date", "image": "<file>"}]}
/// Image paths are relative to the manifest; a missing image is replaced by
/// a generated grey picture.
class FixtureServer {
 public:
  struct Entry {
    std::string pano_id;
    geo::GeoPoint location;
    std::string date;
    std::filesystem::path image;
  };

  explicit FixtureServer(std::vector<Entry> entries);
  static FixtureServer from_manifest(const std::filesystem::path& manifest);
  ~FixtureServer();
  FixtureServer(FixtureServer&&) noexcept;

  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocks; for the CLI.
  bool serve(const std::string& host, int port);
  void stop();

  std::size_t metadata_calls() const;
  std::size_t image_calls() const;
  /// Respond with HTTP 503 to the next `n` requests.
  void fail_next(std::size_t n);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace streetcam::imagery
