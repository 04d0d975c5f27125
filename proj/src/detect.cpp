#include "streetcam/detect.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "streetcam/error.hpp"
#include "streetcam/io.hpp"
#include "streetcam/png.hpp"

namespace streetcam::detect {

using json = nlohmann::json;

namespace {

// Runs of a mask's set pixels restricted to a label image.
std::vector<Run> runs_of(const std::vector<std::int32_t>& labels, const Mask& keep, int width,
                         int height, std::int32_t label) {
  std::vector<Run> runs;
  for (int y = 0; y < height; ++y) {
    int x = 0;
    while (x < width) {
      const auto idx = static_cast<std::size_t>(y) * width;
      if (labels[idx + x] == label && keep.bits[idx + x]) {
        int start = x;
        while (x < width && labels[idx + x] == label && keep.bits[idx + x]) ++x;
        runs.push_back({y, start, x - start});
      } else {
        ++x;
      }
    }
  }
  return runs;
}

void finalize(DetectionInstance& d) {
  d.size = 0;
  if (d.runs.empty()) {
    d.bbox = {};
    return;
  }
  int min_x = d.runs.front().x, max_x = min_x, min_y = d.runs.front().y, max_y = min_y;
  for (const auto& r : d.runs) {
    d.size += static_cast<std::size_t>(r.length);
    min_x = std::min(min_x, r.x);
    max_x = std::max(max_x, r.x + r.length - 1);
    min_y = std::min(min_y, r.y);
    max_y = std::max(max_y, r.y);
  }
  d.bbox = {min_x, min_y, max_x - min_x + 1, max_y - min_y + 1};
}

// 8-connected labelling by explicit-stack flood fill; labels are assigned in
// raster order of each component's first pixel. Unset pixels get -1.
std::vector<std::int32_t> label_components(const Mask& m, std::int32_t& count) {
  std::vector<std::int32_t> labels(m.bits.size(), -1);
  std::vector<std::pair<int, int>> stack;
  count = 0;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      const auto idx = static_cast<std::size_t>(y) * m.width + x;
      if (!m.bits[idx] || labels[idx] >= 0) continue;
      const std::int32_t label = count++;
      labels[idx] = label;
      stack.emplace_back(x, y);
      while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= m.width || ny >= m.height) continue;
            const auto n = static_cast<std::size_t>(ny) * m.width + nx;
            if (m.bits[n] && labels[n] < 0) {
              labels[n] = label;
              stack.emplace_back(nx, ny);
            }
          }
        }
      }
    }
  }
  return labels;
}

std::size_t intersection(const DetectionInstance& a, const DetectionInstance& b) {
  std::size_t inter = 0;
  auto ia = a.runs.begin();
  auto ib = b.runs.begin();
  while (ia != a.runs.end() && ib != b.runs.end()) {
    if (ia->y != ib->y) {
      (ia->y < ib->y ? ++ia : ++ib);
      continue;
    }
    const int lo = std::max(ia->x, ib->x);
    const int hi = std::min(ia->x + ia->length, ib->x + ib->length);
    if (hi > lo) inter += static_cast<std::size_t>(hi - lo);
    (ia->x + ia->length < ib->x + ib->length ? ++ia : ++ib);
  }
  return inter;
}

double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 1.0; }

}  // namespace

ProbabilityMap::ProbabilityMap(std::string id, int w, int h, float fill)
    : image_id(std::move(id)), width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

void ProbabilityMap::validate() const {
  if (width < 0 || height < 0 || values.size() != static_cast<std::size_t>(width) * height) {
    throw DataError("probability map " + image_id + ": size mismatch");
  }
  for (float v : values) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw DataError("probability map " + image_id + ": value outside [0, 1]");
    }
  }
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

Mask threshold(const ProbabilityMap& map, double prob_threshold) {
  Mask m(map.width, map.height);
  for (std::size_t i = 0; i < map.values.size(); ++i) m.bits[i] = map.values[i] >= prob_threshold;
  return m;
}

Mask dilate3x3(const Mask& m) {
  Mask out(m.width, m.height);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx >= 0 && ny >= 0 && nx < m.width && ny < m.height) out.set(nx, ny);
        }
      }
    }
  }
  return out;
}

std::vector<DetectionInstance> extract_instances(const ProbabilityMap& map, const ExtractOptions& opts) {
  const Mask binary = threshold(map, opts.prob_threshold);
  const Mask grown = dilate3x3(binary);
  std::int32_t count = 0;
  const auto labels = label_components(grown, count);

  // Collect pre-dilation runs per dilated component in one raster pass.
  std::vector<DetectionInstance> by_label(static_cast<std::size_t>(count));
  for (int y = 0; y < binary.height; ++y) {
    const auto row = static_cast<std::size_t>(y) * binary.width;
    int x = 0;
    while (x < binary.width) {
      if (!binary.bits[row + x]) {
        ++x;
        continue;
      }
      const std::int32_t label = labels[row + x];
      const int start = x;
      while (x < binary.width && binary.bits[row + x] && labels[row + x] == label) ++x;
      by_label[static_cast<std::size_t>(label)].runs.push_back({y, start, x - start});
    }
  }

  std::vector<DetectionInstance> out;
  for (auto& d : by_label) {
    finalize(d);
    if (d.size == 0 || d.size < opts.size_threshold) continue;
    d.image_id = map.image_id;
    out.push_back(std::move(d));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.runs.front().y, a.runs.front().x) < std::tie(b.runs.front().y, b.runs.front().x);
  });
  return out;
}

DetectionInstance instance_from_mask(const Mask& m, std::string image_id) {
  std::vector<std::int32_t> all(m.bits.size(), 0);
  DetectionInstance d;
  d.image_id = std::move(image_id);
  d.runs = runs_of(all, m, m.width, m.height, 0);
  finalize(d);
  return d;
}

std::vector<DetectionInstance> instances_from_mask(const Mask& m, const std::string& image_id) {
  std::int32_t count = 0;
  const auto labels = label_components(m, count);
  std::vector<DetectionInstance> out;
  for (std::int32_t l = 0; l < count; ++l) {
    DetectionInstance d;
    d.image_id = image_id;
    d.runs = runs_of(labels, m, m.width, m.height, l);
    finalize(d);
    out.push_back(std::move(d));
  }
  return out;
}

Mask to_mask(std::span<const DetectionInstance> instances, int width, int height) {
  Mask m(width, height);
  for (const auto& d : instances) {
    for (const auto& r : d.runs) {
      for (int x = r.x; x < r.x + r.length; ++x) m.set(x, r.y);
    }
  }
  return m;
}

double mask_iou(const DetectionInstance& a, const DetectionInstance& b) {
  const std::size_t inter = intersection(a, b);
  const std::size_t uni = a.size + b.size - inter;
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

PixelMetrics pixel_metrics(std::span<const Mask> pred, std::span<const Mask> gt) {
  if (pred.size() != gt.size()) throw DataError("pixel_metrics: image count mismatch");
  std::size_t tp = 0, fp = 0, fn = 0, total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].width != gt[i].width || pred[i].height != gt[i].height) {
      throw DataError("pixel_metrics: dimension mismatch at image " + std::to_string(i));
    }
    for (std::size_t k = 0; k < pred[i].bits.size(); ++k) {
      const bool p = pred[i].bits[k] != 0;
      const bool g = gt[i].bits[k] != 0;
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
    total += pred[i].bits.size();
  }
  const double tn = static_cast<double>(total - tp - fp - fn);
  PixelMetrics m;
  m.iou_camera = safe_ratio(static_cast<double>(tp), static_cast<double>(tp + fp + fn));
  m.accuracy = safe_ratio(static_cast<double>(tp) + tn, static_cast<double>(total));
  m.f1 = safe_ratio(2.0 * static_cast<double>(tp), static_cast<double>(2 * tp + fp + fn));
  return m;
}

PrecisionRecall instance_pr(std::span<const DetectionInstance> pred,
                            std::span<const DetectionInstance> gt, double iou_threshold) {
  PrecisionRecall pr;
  pr.predictions = pred.size();
  pr.ground_truth = gt.size();

  struct Pair {
    double iou;
    std::size_t p, g;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (pred[i].image_id != gt[j].image_id) continue;
      const double iou = mask_iou(pred[i], gt[j]);
      if (iou >= iou_threshold) pairs.push_back({iou, i, j});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return std::tie(b.iou, a.p, a.g) < std::tie(a.iou, b.p, b.g);
  });
  std::vector<bool> used_p(pred.size()), used_g(gt.size());
  for (const auto& pair : pairs) {
    if (used_p[pair.p] || used_g[pair.g]) continue;
    used_p[pair.p] = used_g[pair.g] = true;
    ++pr.true_positives;
  }
  pr.precision = safe_ratio(static_cast<double>(pr.true_positives), static_cast<double>(pr.predictions));
  pr.recall = safe_ratio(static_cast<double>(pr.true_positives), static_cast<double>(pr.ground_truth));
  return pr;
}

std::vector<SweepRow> sweep_thresholds(std::span<const ProbabilityMap> maps,
                                       std::span<const std::vector<DetectionInstance>> gts,
                                       std::span<const double> prob_thresholds,
                                       std::span<const std::size_t> size_thresholds,
                                       double iou_threshold) {
  if (maps.size() != gts.size()) throw DataError("sweep_thresholds: maps and ground truth differ in length");
  std::vector<DetectionInstance> all_gt;
  for (const auto& g : gts) all_gt.insert(all_gt.end(), g.begin(), g.end());

  std::vector<SweepRow> rows;
  for (std::size_t size : size_thresholds) {
    for (double prob : prob_thresholds) {
      std::vector<DetectionInstance> preds;
      for (const auto& m : maps) {
        auto inst = extract_instances(m, {prob, size});
        preds.insert(preds.end(), std::make_move_iterator(inst.begin()), std::make_move_iterator(inst.end()));
      }
      rows.push_back({prob, size, instance_pr(preds, all_gt, iou_threshold)});
    }
  }
  return rows;
}

EvalReport evaluate(std::span<const ProbabilityMap> maps, std::span<const Mask> gt_masks,
                    const ExtractOptions& opts, double iou_threshold) {
  if (maps.size() != gt_masks.size()) throw DataError("evaluate: maps and masks differ in length");
  std::vector<Mask> pred_masks;
  std::vector<DetectionInstance> preds, gts;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    pred_masks.push_back(threshold(maps[i], opts.prob_threshold));
    auto inst = extract_instances(maps[i], opts);
    preds.insert(preds.end(), inst.begin(), inst.end());
    auto g = instances_from_mask(gt_masks[i], maps[i].image_id);
    gts.insert(gts.end(), g.begin(), g.end());
  }
  return {pixel_metrics(pred_masks, gt_masks), instance_pr(preds, gts, iou_threshold), opts};
}

std::string encode_probability_map(const ProbabilityMap& map) {
  std::string out = "P " + std::to_string(map.width) + " " + std::to_string(map.height) + "\n";
  const std::size_t header = out.size();
  out.resize(header + map.values.size() * 4);
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(map.values[i]);
    for (int b = 0; b < 4; ++b) out[header + 4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  return out;
}

ProbabilityMap decode_probability_map(std::string_view bytes, std::string image_id) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw DataError("probability map " + image_id + ": missing header");
  std::istringstream hdr{std::string(bytes.substr(0, nl))};
  std::string tag;
  long w = -1, h = -1;
  hdr >> tag >> w >> h;
  if (tag != "P" || w < 0 || h < 0 || hdr.fail()) {
    throw DataError("probability map " + image_id + ": bad header");
  }
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() - nl - 1 != n * 4) {
    throw DataError("probability map " + image_id + ": expected " + std::to_string(n) + " floats");
  }
  ProbabilityMap map(std::move(image_id), static_cast<int>(w), static_cast<int>(h));
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + nl + 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[4 * i + b]) << (8 * b);
    map.values[i] = std::bit_cast<float>(bits);
  }
  map.validate();
  return map;
}

ProbabilityMap read_probability_map(const std::filesystem::path& file) {
  return decode_probability_map(io::read_file(file), file.stem().string());
}

void write_probability_map(const ProbabilityMap& map, const std::filesystem::path& file) {
  io::write_file_atomic(file, encode_probability_map(map));
}

Mask read_mask_png(const std::filesystem::path& file) {
  const auto img = png::decode_gray(io::read_file(file));
  Mask m(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) m.bits[i] = img.pixels[i] != 0;
  return m;
}

void write_mask_png(const Mask& m, const std::filesystem::path& file) {
  png::GrayImage img{m.width, m.height, {}};
  img.pixels.resize(m.bits.size());
  for (std::size_t i = 0; i < m.bits.size(); ++i) img.pixels[i] = m.bits[i] ? 255 : 0;
  io::write_file_atomic(file, png::encode_gray(img));
}

std::string to_jsonl(const DetectionInstance& d) {
  json runs = json::array();
  for (const auto& r : d.runs) runs.push_back({r.y, r.x, r.length});
  return json{{"image_id", d.image_id},
              {"bbox", {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h}},
              {"size", d.size},
              {"runs", std::move(runs)}}
      .dump();
}

DetectionInstance detection_from_jsonl(std::string_view line) {
  const json j = json::parse(line);
  DetectionInstance d;
  d.image_id = j.at("image_id").get<std::string>();
  const auto& b = j.at("bbox");
  d.bbox = {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
  d.size = j.at("size").get<std::size_t>();
  if (j.contains("runs")) {
    for (const auto& r : j["runs"]) d.runs.push_back({r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>()});
  }
  return d;
}

void write_detections(std::span<const DetectionInstance> dets, const std::filesystem::path& file) {
  io::AtomicWriter out(file);
  for (const auto& d : dets) out.stream() << to_jsonl(d) << '\n';
  out.commit();
}

std::vector<DetectionInstance> read_detections(const std::filesystem::path& file) {
  std::vector<DetectionInstance> out;
  io::for_each_line(file, [&](std::string_view line, std::size_t n) {
    try {
      out.push_back(detection_from_jsonl(line));
    } catch (const std::exception& e) {
      throw DataError(file.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace streetcam::detect
