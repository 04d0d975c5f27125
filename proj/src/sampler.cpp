#include "streetcam/sampler.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "streetcam/error.hpp"
#include "streetcam/io.hpp"

namespace streetcam::sampler {

using json = nlohmann::json;

std::string_view to_string(Side s) { return s == Side::left ? "left" : "right"; }

std::string_view to_string(Status s) {
  switch (s) {
    case Status::pending: return "pending";
    case Status::no_imagery: return "no_imagery";
    case Status::imaged: return "imaged";
  }
  return "pending";
}

RoadSampler::RoadSampler(const ingest::RoadNetwork& network, geo::Projection projection)
    : network_(&network), projection_(projection) {
  if (network.empty()) throw DataError("cannot sample an empty road network");
  cumulative_.reserve(network.segments.size() + 1);
  cumulative_.push_back(0.0);
  for (const auto& s : network.segments) cumulative_.push_back(cumulative_.back() + s.line.length());
  if (!(cumulative_.back() > 0.0)) throw DataError("road network has zero length");
}

SamplePoint RoadSampler::draw(Rng& rng, std::uint64_t id) const {
  const double s = rng.uniform() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin() + 1, cumulative_.end(), s);
  if (it == cumulative_.end()) --it;
  std::size_t seg = static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  // Skip zero-length segments (they own no probability mass).
  while (network_->segments[seg].line.length() <= 0.0 && seg + 1 < network_->segments.size()) ++seg;
  const auto& line = network_->segments[seg].line;
  const auto [pt, sub] = line.point_at(s - cumulative_[seg]);

  SamplePoint p;
  p.id = id;
  p.location = pt;
  p.geo = projection_.unproject(pt);
  p.segment = network_->segments[seg].id;
  p.road_bearing = line.bearing_of_segment(sub);
  p.side = rng.bernoulli(0.5) ? Side::right : Side::left;
  p.view_heading = geo::wrap_degrees(p.road_bearing + (p.side == Side::right ? 90.0 : -90.0));
  return p;
}

std::vector<SamplePoint> sample_points(const ingest::RoadNetwork& network,
                                       const geo::Projection& projection, std::size_t n,
                                       std::uint64_t seed, std::string_view stream) {
  if (n == 0) throw DataError("sample count must be at least 1");
  RoadSampler sampler(network, projection);
  Rng rng = Rng::substream(seed, stream);
  std::vector<SamplePoint> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sampler.draw(rng, i));
  return out;
}

AvailabilityResult apply_availability(std::vector<SamplePoint> points, const AvailabilityOracle& oracle,
                                      const RoadSampler& sampler, Rng& rng,
                                      std::optional<std::size_t> max_draws) {
  const std::size_t cap = max_draws.value_or(10 * points.size());
  AvailabilityResult res;
  std::uint64_t next_id = 0;
  for (const auto& p : points) next_id = std::max(next_id, p.id + 1);

  for (auto& slot : points) {
    while (true) {
      if (res.draws >= cap) {
        const double rate = res.draws ? 1.0 - static_cast<double>(res.rejected) / res.draws : 0.0;
        throw DataError("imagery availability retry cap of " + std::to_string(cap) +
                        " draws exceeded (availability rate " + std::to_string(rate) + ")");
      }
      ++res.draws;
      if (auto cap_info = oracle(slot)) {
        slot.capture = std::move(cap_info);
        break;
      }
      ++res.rejected;
      slot = sampler.draw(rng, next_id++);
    }
  }
  res.points = std::move(points);
  return res;
}

std::string to_jsonl(const SamplePoint& p) {
  json j{{"id", p.id},
         {"x", p.location.x},
         {"y", p.location.y},
         {"lat", p.geo.lat},
         {"lon", p.geo.lon},
         {"segment", p.segment},
         {"road_bearing", p.road_bearing},
         {"view_heading", p.view_heading},
         {"side", to_string(p.side)},
         {"status", to_string(p.status)},
         {"image_id", p.image_id}};
  if (p.capture) {
    j["capture"] = {{"x", p.capture->location.x},
                    {"y", p.capture->location.y},
                    {"pano_id", p.capture->pano_id},
                    {"date", p.capture->date}};
  }
  return j.dump();
}

SamplePoint sample_from_jsonl(std::string_view line) {
  const json j = json::parse(line);
  SamplePoint p;
  p.id = j.at("id").get<std::uint64_t>();
  p.location = {j.at("x").get<double>(), j.at("y").get<double>()};
  p.geo = {j.at("lat").get<double>(), j.at("lon").get<double>()};
  p.segment = j.at("segment").get<std::uint32_t>();
  p.road_bearing = j.at("road_bearing").get<double>();
  p.view_heading = j.at("view_heading").get<double>();
  p.side = j.at("side").get<std::string>() == "right" ? Side::right : Side::left;
  const auto status = j.at("status").get<std::string>();
  p.status = status == "imaged" ? Status::imaged
             : status == "no_imagery" ? Status::no_imagery
                                      : Status::pending;
  p.image_id = j.value("image_id", "");
  if (j.contains("capture")) {
    const auto& c = j["capture"];
    p.capture = Capture{{c.at("x").get<double>(), c.at("y").get<double>()},
                        c.value("pano_id", ""),
                        c.value("date", "")};
  }
  return p;
}

void write_samples(const std::vector<SamplePoint>& points, const std::filesystem::path& file) {
  io::AtomicWriter out(file);
  for (const auto& p : points) out.stream() << to_jsonl(p) << '\n';
  out.commit();
}

std::vector<SamplePoint> read_samples(const std::filesystem::path& file) {
  std::vector<SamplePoint> out;
  io::for_each_line(file, [&](std::string_view line, std::size_t line_no) {
    try {
      out.push_back(sample_from_jsonl(line));
    } catch (const std::exception& e) {
      throw DataError(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace streetcam::sampler
