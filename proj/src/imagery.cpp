#include "streetcam/imagery.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>
#include <thread>

#include "streetcam/error.hpp"
#include "streetcam/io.hpp"
#include "streetcam/png.hpp"

namespace streetcam::imagery {

using json = nlohmann::json;
namespace fs = std::filesystem;

int Panorama::year() const {
  if (date.size() < 4) return 0;
  try {
    return std::stoi(date.substr(0, 4));
  } catch (const std::exception&) {
    return 0;
  }
}

std::string DatePolicy::key() const {
  switch (rule) {
    case DateRule::oldest: return "oldest";
    case DateRule::newest: return "newest";
    case DateRule::oldest_in_range: break;
  }
  return fmt::format("oldest-in-range:{}-{}", from_year, to_year);
}

DatePolicy DatePolicy::parse(std::string_view text) {
  DatePolicy p;
  if (text == "oldest") {
    p.rule = DateRule::oldest;
    return p;
  }
  if (text == "newest") {
    p.rule = DateRule::newest;
    return p;
  }
  constexpr std::string_view prefix = "oldest-in-range";
  if (text.substr(0, prefix.size()) != prefix) throw UsageError("unknown date policy: " + std::string(text));
  text.remove_prefix(prefix.size());
  if (text.empty()) return p;
  int a = 0, b = 0;
  if (text.front() != ':' || std::sscanf(std::string(text.substr(1)).c_str(), "%d-%d", &a, &b) != 2 || a > b) {
    throw UsageError("date policy range must look like oldest-in-range:2015-2021");
  }
  p.from_year = a;
  p.to_year = b;
  return p;
}

std::optional<Panorama> select_panorama(const std::vector<Panorama>& candidates, const DatePolicy& policy) {
  std::vector<const Panorama*> pool;
  for (const auto& c : candidates) {
    if (policy.rule == DateRule::oldest_in_range && (c.year() < policy.from_year || c.year() > policy.to_year)) {
      continue;
    }
    pool.push_back(&c);
  }
  if (pool.empty()) return std::nullopt;
  // Date strings are ISO-like, so lexical order is chronological. Ties go to
  // the nearer panorama, then the smaller id.
  auto older = [](const Panorama* a, const Panorama* b) {
    if (a->date != b->date) return a->date < b->date;
    if (a->distance_m != b->distance_m) return a->distance_m < b->distance_m;
    return a->pano_id < b->pano_id;
  };
  auto newer = [](const Panorama* a, const Panorama* b) {
    if (a->date != b->date) return a->date > b->date;
    if (a->distance_m != b->distance_m) return a->distance_m < b->distance_m;
    return a->pano_id < b->pano_id;
  };
  const auto it = policy.rule == DateRule::newest ? std::min_element(pool.begin(), pool.end(), newer)
                                                  : std::min_element(pool.begin(), pool.end(), older);
  return **it;
}

std::string_view to_string(Source s) {
  switch (s) {
    case Source::live: return "live";
    case Source::fixture: return "fixture";
    case Source::synthetic: return "synthetic";
  }
  return "live";
}

std::string heading_tag(double heading) {
  return fmt::format("{:03d}", static_cast<int>(std::lround(geo::wrap_degrees(heading))) % 360);
}

RateLimiter::RateLimiter(double per_second, double burst)
    : rate_(per_second), burst_(std::max(1.0, burst)), tokens_(burst_), last_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
  if (rate_ <= 0) return;
  std::unique_lock lock(mutex_);
  for (;;) {
    const auto now = std::chrono::steady_clock::now();
    tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    lock.unlock();
    std::this_thread::sleep_for(wait);
    lock.lock();
  }
}

struct ImageryClient::Transport {
  std::mutex mutex;
  httplib::Client client;
  explicit Transport(const std::string& base) : client(base) {}
};

ImageryClient::ImageryClient(ClientConfig cfg)
    : cfg_(std::move(cfg)), limiter_(cfg_.requests_per_second) {
  if (cfg_.api_key.empty()) {
    if (const char* k = std::getenv("STREETCAM_API_KEY")) cfg_.api_key = k;
  }
  transport_ = std::make_unique<Transport>(cfg_.base_url);
  transport_->client.set_connection_timeout(cfg_.timeout);
  transport_->client.set_read_timeout(cfg_.timeout);
  if (!transport_->client.is_valid()) throw UsageError("unsupported imagery endpoint: " + cfg_.base_url);
}

ImageryClient::~ImageryClient() = default;

std::string ImageryClient::get(const std::string& path_and_query) {
  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(cfg_.backoff * (1 << (attempt - 1)));
    limiter_.acquire();
    ++requests_;
    httplib::Result res;
    {
      // httplib::Client is not safe for concurrent requests.
      std::lock_guard lock(transport_->mutex);
      res = transport_->client.Get(path_and_query);
    }
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return res->body;
    last_error = fmt::format("HTTP {}", res->status);
    if (res->status < 500 && res->status != 429) break;
  }
  throw RetryableError(fmt::format("GET {} failed: {}", path_and_query.substr(0, path_and_query.find('?')),
                                   last_error));
}

std::vector<Panorama> ImageryClient::panoramas_near(geo::GeoPoint p) {
  const std::string query = fmt::format("{}?location={:.7f},{:.7f}&radius={}&key={}", cfg_.metadata_path, p.lat,
                                        p.lon, cfg_.radius_m, httplib::detail::encode_query_param(cfg_.api_key));
  json body;
  try {
    body = json::parse(get(query));
  } catch (const json::parse_error& e) {
    throw RetryableError(std::string("metadata response is not JSON: ") + e.what());
  }
  const std::string status = body.value("status", "");
  if (status == "ZERO_RESULTS" || status == "NOT_FOUND") return {};
  if (status != "OK") throw RetryableError("metadata status " + status);

  const geo::Projection local(p);
  std::vector<Panorama> out;
  for (const auto& item : body.value("panoramas", json::array())) {
    Panorama pano;
    pano.pano_id = item.at("pano_id").get<std::string>();
    pano.location = {item.at("location").at("lat").get<double>(), item.at("location").at("lng").get<double>()};
    pano.date = item.value("date", "");
    pano.distance_m = geo::norm(local.project(pano.location));
    // The endpoint radius is advisory; enforce it here.
    if (pano.distance_m <= cfg_.radius_m) out.push_back(std::move(pano));
  }
  std::sort(out.begin(), out.end(), [](const Panorama& a, const Panorama& b) {
    return a.distance_m != b.distance_m ? a.distance_m < b.distance_m : a.pano_id < b.pano_id;
  });
  return out;
}

std::string ImageryClient::image_bytes(const std::string& pano_id, double heading) {
  return get(fmt::format("{}?pano={}&heading={}&fov={}&pitch=0&size={}x{}&key={}", cfg_.image_path,
                         httplib::detail::encode_query_param(pano_id), heading_tag(heading), cfg_.fov, cfg_.size,
                         cfg_.size, httplib::detail::encode_query_param(cfg_.api_key)));
}

ImageCache::ImageCache(fs::path root, std::string city, ImageryClient& client, DatePolicy policy)
    : root_(std::move(root)), city_(std::move(city)), client_(&client), policy_(policy) {}

fs::path ImageCache::meta_path(geo::GeoPoint p) const {
  std::string key = policy_.key();
  std::replace(key.begin(), key.end(), ':', '_');
  return city_dir() / "meta" / fmt::format("{:.7f}_{:.7f}_{}.json", p.lat, p.lon, key);
}

Availability ImageCache::check_availability(geo::GeoPoint p) {
  const fs::path meta = meta_path(p);
  if (fs::exists(meta)) {
    const json j = json::parse(io::read_file(meta));
    Availability a;
    a.available = j.at("available").get<bool>();
    if (a.available) {
      Panorama pano;
      pano.pano_id = j.at("pano_id").get<std::string>();
      pano.location = {j.at("lat").get<double>(), j.at("lon").get<double>()};
      pano.date = j.at("date").get<std::string>();
      pano.distance_m = j.at("distance_m").get<double>();
      a.panorama = std::move(pano);
    }
    return a;
  }

  Availability a;
  a.panorama = select_panorama(client_->panoramas_near(p), policy_);
  a.available = a.panorama.has_value();
  json j = {{"available", a.available}, {"policy", policy_.key()}};
  if (a.panorama) {
    j["pano_id"] = a.panorama->pano_id;
    j["lat"] = a.panorama->location.lat;
    j["lon"] = a.panorama->location.lon;
    j["date"] = a.panorama->date;
    j["distance_m"] = a.panorama->distance_m;
  }
  fs::create_directories(meta.parent_path());
  io::write_file_atomic(meta, j.dump());
  return a;
}

ImageRecord ImageCache::fetch_image(const sampler::SamplePoint& point) {
  Availability avail;
  try {
    avail = check_availability(point.geo);
  } catch (const RetryableError& e) {
    throw FetchError(point.id, e.what());
  }
  if (!avail.available) throw FetchError(point.id, "no imagery within the availability radius");
  const Panorama& pano = *avail.panorama;

  ImageRecord rec;
  rec.sample_id = point.id;
  rec.pano_id = pano.pano_id;
  rec.capture = pano.location;
  rec.date = pano.date;
  rec.heading = geo::wrap_degrees(point.view_heading);
  rec.width = rec.height = client_->config().size;
  rec.source = client_->config().source;
  rec.image_id = fmt::format("{}_{}", pano.pano_id, heading_tag(rec.heading));
  rec.cache_path = city_dir() / (rec.image_id + ".png");
  const fs::path sidecar = city_dir() / (rec.image_id + ".json");
  if (fs::exists(rec.cache_path) && fs::exists(sidecar)) return rec;

  std::string bytes;
  try {
    bytes = client_->image_bytes(pano.pano_id, rec.heading);
  } catch (const RetryableError& e) {
    throw FetchError(point.id, e.what());
  }
  try {
    fs::create_directories(city_dir());
    io::write_file_atomic(rec.cache_path, bytes);
    const json meta = {{"image_id", rec.image_id},   {"sample_id", rec.sample_id},
                       {"pano_id", rec.pano_id},     {"lat", rec.capture.lat},
                       {"lon", rec.capture.lon},     {"date", rec.date},
                       {"heading", rec.heading},     {"fov", client_->config().fov},
                       {"width", rec.width},         {"height", rec.height},
                       {"source", to_string(rec.source)}, {"sha256", io::sha256_hex(bytes)}};
    io::write_file_atomic(sidecar, meta.dump());
  } catch (const fs::filesystem_error& e) {
    throw DataError(fmt::format("cannot write image cache {}: {}", city_dir().string(), e.what()));
  }
  return rec;
}

sampler::AvailabilityOracle ImageCache::oracle(const geo::Projection& projection) {
  return [this, projection](const sampler::SamplePoint& p) -> std::optional<sampler::Capture> {
    Availability a;
    try {
      a = check_availability(p.geo);
    } catch (const RetryableError& e) {
      // Transient failures must not count as "no imagery".
      throw DataError(fmt::format("availability lookup for point {} failed: {}", p.id, e.what()));
    }
    if (!a.available) return std::nullopt;
    return sampler::Capture{projection.project(a.panorama->location), a.panorama->pano_id, a.panorama->date};
  };
}

std::vector<ImageRecord> fetch_all(ImageCache& cache, std::vector<sampler::SamplePoint>& points,
                                   std::size_t workers) {
  std::vector<std::optional<ImageRecord>> out(points.size());
  std::vector<std::string> errors(points.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      try {
        out[i] = cache.fetch_image(points[i]);
      } catch (const FetchError& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::max<std::size_t>(1, std::min(workers, points.size())); ++w) {
    pool.emplace_back(work);
  }
  for (auto& t : pool) t.join();

  std::vector<ImageRecord> records;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!out[i]) {
      spdlog::warn("{}", errors[i]);
      points[i].status = sampler::Status::no_imagery;
      ++failed;
      continue;
    }
    points[i].status = sampler::Status::imaged;
    points[i].image_id = out[i]->image_id;
    records.push_back(std::move(*out[i]));
  }
  if (failed > 0) spdlog::warn("{} of {} images could not be fetched", failed, points.size());
  return records;
}

struct FixtureServer::Impl {
  std::vector<Entry> entries;
  httplib::Server server;
  std::thread thread;
  std::atomic<std::size_t> metadata_calls{0};
  std::atomic<std::size_t> image_calls{0};
  std::atomic<std::size_t> fail{0};

  bool should_fail() {
    std::size_t n = fail.load();
    while (n > 0) {
      if (fail.compare_exchange_weak(n, n - 1)) return true;
    }
    return false;
  }

  void routes() {
    server.Get("/metadata", [this](const httplib::Request& req, httplib::Response& res) {
      ++metadata_calls;
      if (should_fail()) {
        res.status = 503;
        return;
      }
      double lat = 0, lon = 0;
      const std::string loc = req.get_param_value("location");
      if (std::sscanf(loc.c_str(), "%lf,%lf", &lat, &lon) != 2) {
        res.status = 400;
        res.set_content(R"({"status":"INVALID_REQUEST"})", "application/json");
        return;
      }
      const double radius = req.has_param("radius") ? std::stod(req.get_param_value("radius")) : 50.0;
      const geo::Projection local({lat, lon});
      json panos = json::array();
      for (const auto& e : entries) {
        if (geo::norm(local.project(e.location)) > radius) continue;
        panos.push_back({{"pano_id", e.pano_id},
                         {"location", {{"lat", e.location.lat}, {"lng", e.location.lon}}},
                         {"date", e.date}});
      }
      const json body = {{"status", panos.empty() ? "ZERO_RESULTS" : "OK"}, {"panoramas", panos}};
      res.set_content(body.dump(), "application/json");
    });

    server.Get("/image", [this](const httplib::Request& req, httplib::Response& res) {
      ++image_calls;
      if (should_fail()) {
        res.status = 503;
        return;
      }
      const std::string id = req.get_param_value("pano");
      const auto it = std::find_if(entries.begin(), entries.end(), [&](const Entry& e) { return e.pano_id == id; });
      if (it == entries.end()) {
        res.status = 404;
        return;
      }
      if (!it->image.empty() && fs::exists(it->image)) {
        res.set_content(io::read_file(it->image), "image/png");
        return;
      }
      int size = 64;
      std::sscanf(req.get_param_value("size").c_str(), "%d", &size);
      size = std::clamp(size, 1, 2048);
      png::GrayImage img{size, size, std::vector<std::uint8_t>(static_cast<std::size_t>(size) * size, 128)};
      res.set_content(png::encode_gray(img), "image/png");
    });
  }
};

FixtureServer::FixtureServer(std::vector<Entry> entries) : impl_(std::make_unique<Impl>()) {
  impl_->entries = std::move(entries);
  impl_->routes();
}

FixtureServer FixtureServer::from_manifest(const fs::path& manifest) {
  json j;
  try {
    j = json::parse(io::read_file(manifest));
  } catch (const json::parse_error& e) {
    throw DataError(fmt::format("{}: {}", manifest.string(), e.what()));
  }
  std::vector<Entry> entries;
  std::size_t i = 0;
  for (const auto& p : j.value("panoramas", json::array())) {
    try {
      Entry e;
      e.pano_id = p.at("pano_id").get<std::string>();
      e.location = {p.at("lat").get<double>(), p.at("lon").get<double>()};
      e.date = p.value("date", "");
      if (p.contains("image")) e.image = manifest.parent_path() / p["image"].get<std::string>();
      entries.push_back(std::move(e));
    } catch (const json::exception& e) {
      throw DataError(fmt::format("{}: panorama {}: {}", manifest.string(), i, e.what()));
    }
    ++i;
  }
  return FixtureServer(std::move(entries));
}

FixtureServer::FixtureServer(FixtureServer&&) noexcept = default;

FixtureServer::~FixtureServer() {
  if (impl_) stop();
}

int FixtureServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw DataError(fmt::format("cannot bind fixture server to {}:{}", host, port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

bool FixtureServer::serve(const std::string& host, int port) { return impl_->server.listen(host, port); }

void FixtureServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::size_t FixtureServer::metadata_calls() const { return impl_->metadata_calls.load(); }
std::size_t FixtureServer::image_calls() const { return impl_->image_calls.load(); }
void FixtureServer::fail_next(std::size_t n) { impl_->fail = n; }

}  // namespace streetcam::imagery
