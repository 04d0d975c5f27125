#include "streetcam/synth.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <numbers>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "streetcam/coverage.hpp"
#include "streetcam/error.hpp"
#include "streetcam/estimate.hpp"
#include "streetcam/io.hpp"
#include "streetcam/rng.hpp"
#include "streetcam/verify.hpp"

namespace streetcam::synth {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kRingDepthM = 50.0;
constexpr int kCellPx = 16;
constexpr int kBlockPx = 8;
constexpr float kInstanceProb = 0.9f;
constexpr float kBackgroundMax = 0.7f;

const std::string kCityName = "synthetic";

// Compass bearing from a to b.
double bearing(geo::LocalPoint a, geo::LocalPoint b) {
  return geo::wrap_degrees(std::atan2(b.x - a.x, b.y - a.y) * 180.0 / std::numbers::pi);
}

geo::LocalPoint offset_point(const geo::Polyline& line, double arc, double lateral, sampler::Side side) {
  const auto [pt, sub] = line.point_at(arc);
  const auto& v = line.vertices();
  const geo::LocalPoint d = v[sub + 1] - v[sub];
  const double len = geo::norm(d);
  // Right of the direction of travel is (dy, -dx).
  const geo::LocalPoint right{d.y / len, -d.x / len};
  return side == sampler::Side::right ? pt + lateral * right : pt - lateral * right;
}

}  // namespace

double grid_road_length(int rows, int cols, double spacing) {
  return (rows + 1.0) * cols * spacing + (cols + 1.0) * rows * spacing;
}

SyntheticCity generate_city(const CityParams& params) {
  const double s = params.spacing;
  const double a = params.setback;
  if (params.rows < 1 || params.cols < 1) throw DataError("grid needs at least one row and one column");
  if (!(a > 0.0) || !(s > 2.0 * a)) {
    throw DataError(fmt::format("need spacing > 2 * setback > 0 (spacing {}, setback {})", s, a));
  }
  if (params.density_per_km < 0.0) throw DataError("camera density must be non-negative");

  SyntheticCity city;
  city.params = params;
  auto& b = city.bundle;
  b.city = kCityName;
  b.origin = params.origin;
  const double width = params.cols * s;
  const double height = params.rows * s;
  const double outer = a + kRingDepthM;
  b.boundary.push_back(geo::Polygon::rectangle(-outer, -outer, width + outer, height + outer));

  std::uint32_t id = 0;
  for (int r = 0; r <= params.rows; ++r) {
    b.roads.segments.push_back({id, fmt::format("ew-{}", r), geo::Polyline({{0.0, r * s}, {width, r * s}})});
    ++id;
  }
  for (int c = 0; c <= params.cols; ++c) {
    b.roads.segments.push_back({id, fmt::format("ns-{}", c), geo::Polyline({{c * s, 0.0}, {c * s, height}})});
    ++id;
  }

  std::uint32_t fid = 0;
  for (int r = 0; r < params.rows; ++r) {
    for (int c = 0; c < params.cols; ++c) {
      b.footprints.push_back(
          {fid++, geo::Polygon::rectangle(c * s + a, r * s + a, (c + 1) * s - a, (r + 1) * s - a)});
    }
  }
  // Outer ring so boundary streets have buildings on both sides.
  b.footprints.push_back({fid++, geo::Polygon::rectangle(-outer, -outer, width + outer, -a)});
  b.footprints.push_back({fid++, geo::Polygon::rectangle(-outer, height + a, width + outer, height + outer)});
  b.footprints.push_back({fid++, geo::Polygon::rectangle(-outer, -a, -a, height + a)});
  b.footprints.push_back({fid++, geo::Polygon::rectangle(width + a, -a, width + outer, height + a)});

  // Cameras sit on the building line: lateral offset equal to the setback.
  Rng rng = Rng::substream(params.seed, "synth-cameras");
  const double total = b.roads.total_length_m();
  const std::size_t k = params.cameras ? *params.cameras : rng.poisson(params.density_per_km * total / 1000.0);
  std::vector<double> cumulative{0.0};
  for (const auto& seg : b.roads.segments) cumulative.push_back(cumulative.back() + seg.line.length());
  for (std::size_t i = 0; i < k; ++i) {
    const double u = rng.uniform() * total;
    const auto it = std::upper_bound(cumulative.begin() + 1, cumulative.end(), u);
    const std::size_t seg = std::min<std::size_t>(it - cumulative.begin() - 1, b.roads.segments.size() - 1);
    PlantedCamera cam;
    cam.segment = b.roads.segments[seg].id;
    cam.arc = u - cumulative[seg];
    cam.side = rng.bernoulli(0.5) ? sampler::Side::right : sampler::Side::left;
    cam.location = offset_point(b.roads.segments[seg].line, cam.arc, a, cam.side);
    city.cameras.push_back(cam);
  }
  return city;
}

bool camera_visible(const SyntheticCity&, const sampler::SamplePoint& image, const PlantedCamera& cam) {
  // Cameras on crossing streets are excluded: an image's coverage only
  // counts road length along its own street.
  if (cam.segment != image.segment) return false;
  const geo::LocalPoint from = image.capture_point();
  if (geo::distance(from, cam.location) > kVisibilityRangeM) return false;
  return geo::angular_difference(bearing(from, cam.location), image.view_heading) <= kHalfFovDeg;
}

std::vector<std::size_t> visible_cameras(const SyntheticCity& city, const sampler::SamplePoint& image) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < city.cameras.size(); ++i) {
    if (camera_visible(city, image, city.cameras[i])) out.push_back(i);
  }
  return out;
}

std::string image_id_for(std::uint64_t sample_id) { return fmt::format("synth-{:06d}", sample_id); }

detect::ProbabilityMap render_map(const std::string& image_id, std::span<const detect::DetectionInstance> instances,
                                  int size, std::uint64_t seed) {
  detect::ProbabilityMap map(image_id, size, size);
  Rng rng = Rng::substream(seed, image_id);
  for (auto& v : map.values) v = static_cast<float>(rng.uniform() * kBackgroundMax);
  for (const auto& inst : instances) {
    for (const auto& run : inst.runs) {
      for (int x = run.x; x < run.x + run.length; ++x) map.at(x, run.y) = kInstanceProb;
    }
  }
  return map;
}

DetectorOutput simulate_detector(const SyntheticCity& city, std::span<const sampler::SamplePoint> samples,
                                 const DetectorParams& params) {
  if (!(params.recall >= 0.0 && params.recall <= 1.0)) throw DataError("recall must lie in [0, 1]");
  if (params.fp_rate < 0.0) throw DataError("false positive rate must be non-negative");
  const int cells = params.map_size / kCellPx;
  if (cells < 1) throw DataError("probability map must be at least 16 px wide");
  const std::size_t slots = static_cast<std::size_t>(cells) * cells;

  std::map<std::uint32_t, std::vector<std::size_t>> by_segment;
  for (std::size_t i = 0; i < city.cameras.size(); ++i) by_segment[city.cameras[i].segment].push_back(i);

  Rng rng = Rng::substream(params.seed, "synth-detector");
  DetectorOutput out;
  for (const auto& s : samples) {
    SimulatedImage img;
    img.sample_id = s.id;
    img.image_id = image_id_for(s.id);
    if (auto it = by_segment.find(s.segment); it != by_segment.end()) {
      for (std::size_t i : it->second) {
        if (camera_visible(city, s, city.cameras[i])) img.visible.push_back(i);
      }
    }
    out.visible_total += img.visible.size();

    std::vector<std::optional<std::size_t>> emitted;
    for (std::size_t i : img.visible) {
      if (rng.bernoulli(params.recall)) emitted.emplace_back(i);
    }
    const std::size_t fps = params.fp_rate > 0.0 ? rng.poisson(params.fp_rate) : 0;
    for (std::size_t f = 0; f < fps; ++f) emitted.emplace_back(std::nullopt);
    if (emitted.size() > slots) {
      throw DataError(fmt::format("image {} needs {} instances but the map has {} slots", img.image_id,
                                  emitted.size(), slots));
    }

    if (!emitted.empty()) {
      // Distinct random slots; partial Fisher-Yates.
      std::vector<std::size_t> order(slots);
      for (std::size_t i = 0; i < slots; ++i) order[i] = i;
      std::vector<SimulatedDetection> dets;
      for (std::size_t e = 0; e < emitted.size(); ++e) {
        std::swap(order[e], order[e + rng.below(slots - e)]);
        const int cx = static_cast<int>(order[e] % cells);
        const int cy = static_cast<int>(order[e] / cells);
        detect::Mask m(params.map_size, params.map_size);
        const int x0 = cx * kCellPx + (kCellPx - kBlockPx) / 2;
        const int y0 = cy * kCellPx + (kCellPx - kBlockPx) / 2;
        for (int y = y0; y < y0 + kBlockPx; ++y) {
          for (int x = x0; x < x0 + kBlockPx; ++x) m.set(x, y);
        }
        dets.push_back({detect::instance_from_mask(m, img.image_id), emitted[e]});
        if (emitted[e]) {
          ++out.true_positives;
        } else {
          ++out.false_positives;
        }
      }
      // Raster order of first pixel, as extract_instances reports them.
      std::sort(dets.begin(), dets.end(), [](const SimulatedDetection& x, const SimulatedDetection& y) {
        return x.instance.runs.front() < y.instance.runs.front();
      });
      if (params.emit_maps) {
        std::vector<detect::DetectionInstance> inst;
        for (const auto& d : dets) inst.push_back(d.instance);
        out.maps.push_back(render_map(img.image_id, inst, params.map_size, params.seed));
      }
      for (auto& d : dets) out.detections.push_back(std::move(d));
    }
    out.images.push_back(std::move(img));
  }
  return out;
}

SeedResult run_seed(const CalibrationConfig& cfg, std::uint64_t seed) {
  CityParams cp = cfg.city;
  cp.seed = seed;
  cp.cameras = cfg.true_k;
  const SyntheticCity city = generate_city(cp);
  const auto projection = city.bundle.projection();

  const auto samples = sampler::sample_points(city.bundle.roads, projection, cfg.n_images, seed, "synth-sample");
  const coverage::FootprintLocator locator(city.bundle.footprints);
  std::vector<coverage::CoverageRecord> records;
  std::vector<sampler::SamplePoint> included;
  records.reserve(samples.size());
  for (const auto& s : samples) {
    records.push_back(coverage::image_coverage(s.id, s.capture_point(), locator));
    if (records.back().included) included.push_back(s);
  }
  const auto cov = coverage::city_coverage(records, city.road_length_m());

  DetectorParams dp = cfg.detector;
  dp.seed = seed;
  dp.emit_maps = false;
  const auto sim = simulate_detector(city, included, dp);

  // Oracle annotators accept exactly the planted cameras.
  std::map<std::pair<std::string, int>, bool> truth;
  std::vector<detect::DetectionInstance> instances;
  for (const auto& d : sim.detections) {
    truth[{d.instance.image_id, d.instance.bbox.y * 100000 + d.instance.bbox.x}] = d.camera.has_value();
    instances.push_back(d.instance);
  }
  verify::StoreOptions so;
  so.quorum = cfg.quorum;
  so.clock = [] { return std::int64_t{0}; };
  verify::TaskStore store({}, so);
  const auto candidates = verify::candidates_from(instances, city.bundle.city);
  store.create_tasks(candidates);
  for (std::size_t a = 0; a < cfg.quorum; ++a) {
    const std::string annotator = fmt::format("oracle-{}", a + 1);
    while (auto task = store.next_task(annotator)) {
      std::vector<bool> decisions;
      for (const auto& box : task->boxes) decisions.push_back(truth.at({task->image_id, box.y * 100000 + box.x}));
      store.submit_verdict(task->task_id, annotator, decisions);
    }
  }
  const auto exported = store.export_verified();
  const auto it = exported.verified_per_city.find(city.bundle.city);
  const std::size_t n = it == exported.verified_per_city.end() ? 0 : it->second;

  const auto est = estimate::estimate_city(static_cast<double>(n), static_cast<double>(cov.n_images), cov.c,
                                           cfg.detector.recall, city.road_length_m() / 1000.0, city.bundle.city);
  SeedResult r;
  r.seed = seed;
  r.true_k = city.true_k();
  r.n_images = cov.n_images;
  r.verified = n;
  r.c = cov.c;
  r.k_hat = est.k_hat;
  r.se = est.se;
  r.ci_low = est.ci95_low;
  r.ci_high = est.ci95_high;
  r.covered = r.ci_low <= static_cast<double>(r.true_k) && static_cast<double>(r.true_k) <= r.ci_high;
  r.visible = sim.visible_total;
  r.true_positives = sim.true_positives;
  return r;
}

CalibrationReport end_to_end_check(const CalibrationConfig& cfg) {
  if (cfg.seeds == 0) throw DataError("need at least one seed");
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::uint64_t> seeds(cfg.seeds);
  for (std::size_t i = 0; i < cfg.seeds; ++i) seeds[i] = Rng::substream(cfg.master_seed, fmt::format("seed-{}", i)).next();

  CalibrationReport rep;
  rep.runs.resize(cfg.seeds);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < cfg.seeds; i = next++) {
      try {
        rep.runs[i] = run_seed(cfg, seeds[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t jobs = std::clamp<std::size_t>(cfg.jobs, 1, cfg.seeds);
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  const double m = static_cast<double>(cfg.seeds);
  double sum = 0, sum_se = 0, covered = 0, visible = 0, tp = 0;
  for (const auto& r : rep.runs) {
    sum += r.k_hat;
    sum_se += r.se;
    covered += r.covered ? 1 : 0;
    visible += static_cast<double>(r.visible);
    tp += static_cast<double>(r.true_positives);
  }
  rep.true_k = static_cast<double>(cfg.true_k);
  rep.mean_k_hat = sum / m;
  double ss = 0;
  for (const auto& r : rep.runs) ss += (r.k_hat - rep.mean_k_hat) * (r.k_hat - rep.mean_k_hat);
  rep.sd_k_hat = cfg.seeds > 1 ? std::sqrt(ss / (m - 1)) : 0.0;
  rep.mean_k_hat_se = rep.sd_k_hat / std::sqrt(m);
  rep.mean_se = sum_se / m;
  rep.relative_bias = rep.true_k > 0 ? (rep.mean_k_hat - rep.true_k) / rep.true_k : 0.0;
  rep.ci_coverage = covered / m;
  rep.measured_recall = visible > 0 ? tp / visible : 0.0;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

std::string report_csv(const CalibrationReport& r) {
  std::string out = "seed,true_k,N,n,c,k_hat,se,ci_low,ci_high,covered,visible,true_positives\n";
  for (const auto& s : r.runs) {
    out += fmt::format("{},{},{},{},{:.6f},{:.4f},{:.4f},{:.4f},{:.4f},{},{},{}\n", s.seed, s.true_k, s.n_images,
                       s.verified, s.c, s.k_hat, s.se, s.ci_low, s.ci_high, s.covered ? 1 : 0, s.visible,
                       s.true_positives);
  }
  return out;
}

std::string report_text(const CalibrationReport& r) {
  return fmt::format(
      "seeds            {}\n"
      "true K           {:.0f}\n"
      "mean K-hat       {:.2f} (se of mean {:.2f})\n"
      "relative bias    {:+.2f}%\n"
      "sd of K-hat      {:.2f}\n"
      "mean se          {:.2f}\n"
      "95% CI coverage  {:.3f}\n"
      "measured recall  {:.4f}\n"
      "elapsed          {:.1f} s\n",
      r.runs.size(), r.true_k, r.mean_k_hat, r.mean_k_hat_se, 100.0 * r.relative_bias, r.sd_k_hat, r.mean_se,
      r.ci_coverage, r.measured_recall, r.seconds);
}

void write_city(const SyntheticCity& city, const fs::path& dir) {
  fs::create_directories(dir);
  const auto proj = city.bundle.projection();
  auto coord = [&](geo::LocalPoint p) {
    const auto g = proj.unproject(p);
    return json::array({g.lon, g.lat});
  };
  auto ring = [&](const geo::Ring& r) {
    json out = json::array();
    for (const auto& p : r) out.push_back(coord(p));
    return out;
  };
  auto collection = [](json features) { return json{{"type", "FeatureCollection"}, {"features", std::move(features)}}; };

  json roads = json::array();
  for (const auto& s : city.bundle.roads.segments) {
    json line = json::array();
    for (const auto& p : s.line.vertices()) line.push_back(coord(p));
    roads.push_back({{"type", "Feature"},
                     {"properties", {{"id", s.source_id}, {"highway", "residential"}}},
                     {"geometry", {{"type", "LineString"}, {"coordinates", line}}}});
  }
  json boundary = json::array();
  for (const auto& b : city.bundle.boundary) {
    boundary.push_back({{"type", "Feature"},
                        {"properties", json::object()},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", {ring(b.exterior())}}}}});
  }
  json footprints = json::array();
  for (const auto& f : city.bundle.footprints) {
    footprints.push_back({{"type", "Feature"},
                          {"properties", {{"id", f.id}}},
                          {"geometry", {{"type", "Polygon"}, {"coordinates", {ring(f.shape.exterior())}}}}});
  }
  json cameras = json::array();
  for (std::size_t i = 0; i < city.cameras.size(); ++i) {
    const auto& c = city.cameras[i];
    cameras.push_back({{"type", "Feature"},
                       {"properties", {{"id", i}, {"segment", c.segment}, {"arc", c.arc}, {"side", sampler::to_string(c.side)}}},
                       {"geometry", {{"type", "Point"}, {"coordinates", coord(c.location)}}}});
  }
  io::write_file_atomic(dir / "roads.geojson", collection(roads).dump());
  io::write_file_atomic(dir / "boundary.geojson", collection(boundary).dump());
  io::write_file_atomic(dir / "footprints.geojson", collection(footprints).dump());
  io::write_file_atomic(dir / "cameras.geojson", collection(cameras).dump());

  // Fixture imagery: a panorama every 5 m along each street, so every road
  // point has one well inside the availability radius.
  json panos = json::array();
  for (const auto& s : city.bundle.roads.segments) {
    const int steps = static_cast<int>(std::floor(s.line.length() / 5.0));
    for (int i = 0; i <= steps; ++i) {
      const auto g = proj.unproject(s.line.point_at(i * 5.0).first);
      panos.push_back({{"pano_id", fmt::format("{}-{:05d}", s.source_id, i)},
                       {"lat", g.lat},
                       {"lon", g.lon},
                       {"date", "2018-06"}});
    }
  }
  io::write_file_atomic(dir / "panoramas.json", json{{"panoramas", panos}}.dump());
  const json meta = {{"rows", city.params.rows},           {"cols", city.params.cols},
                     {"spacing", city.params.spacing},     {"setback", city.params.setback},
                     {"density_per_km", city.params.density_per_km}, {"seed", city.params.seed},
                     {"true_k", city.true_k()},            {"road_length_m", city.road_length_m()}};
  io::write_file_atomic(dir / "city.json", meta.dump(2));
}

}  // namespace streetcam::synth
