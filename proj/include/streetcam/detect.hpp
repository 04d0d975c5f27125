#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace streetcam::detect {

/// Row-major per-pixel camera probabilities for one image.
struct ProbabilityMap {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<float> values;

  ProbabilityMap() = default;
  ProbabilityMap(std::string id, int w, int h, float fill = 0.0f);

  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  /// Throws DataError if a value is outside [0, 1] or the size is inconsistent.
  void validate() const;
};

/// Binary mask, one byte per pixel (0 or 1).
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v = true) { bits[static_cast<std::size_t>(y) * width + x] = v; }
  std::size_t count() const;
};

/// One horizontal run of mask pixels.
struct Run {
  int y = 0;
  int x = 0;
  int length = 0;
  friend bool operator==(const Run&, const Run&) = default;
  friend auto operator<=>(const Run&, const Run&) = default;
};

struct PixelBox {
  int x = 0, y = 0, w = 0, h = 0;
  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

struct DetectionInstance {
  std::string image_id;
  std::vector<Run> runs;  // sorted by (y, x)
  PixelBox bbox;
  std::size_t size = 0;

  friend bool operator==(const DetectionInstance&, const DetectionInstance&) = default;
};

struct ExtractOptions {
  double prob_threshold = 0.75;
  std::size_t size_threshold = 50;
};

/// Threshold, one 3x3 dilation pass, 8-connected labelling of the dilated
/// mask, size filter. Instances keep their pre-dilation pixels and are
/// ordered by their first pixel in raster order.
std::vector<DetectionInstance> extract_instances(const ProbabilityMap& map,
                                                 const ExtractOptions& opts = {});

Mask threshold(const ProbabilityMap& map, double prob_threshold);
Mask dilate3x3(const Mask& m);

/// Builds an instance from an arbitrary pixel set given as a mask.
DetectionInstance instance_from_mask(const Mask& m, std::string image_id);
/// 8-connected components of a ground-truth mask, no dilation or size filter.
std::vector<DetectionInstance> instances_from_mask(const Mask& m, const std::string& image_id);
Mask to_mask(std::span<const DetectionInstance> instances, int width, int height);

double mask_iou(const DetectionInstance& a, const DetectionInstance& b);

struct PixelMetrics {
  double iou_camera = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
};

/// Confusion counts pooled over all image pairs. Throws DataError when a
/// pair's dimensions differ.
PixelMetrics pixel_metrics(std::span<const Mask> pred, std::span<const Mask> gt);

struct PrecisionRecall {
  double precision = 1.0;
  double recall = 1.0;
  std::size_t true_positives = 0;
  std::size_t predictions = 0;
  std::size_t ground_truth = 0;
};

/// Greedy one-to-one matching per image by descending mask IoU; a pair
/// counts when IoU >= iou_threshold. Empty denominators give 1.
PrecisionRecall instance_pr(std::span<const DetectionInstance> pred,
                            std::span<const DetectionInstance> gt, double iou_threshold = 0.5);

struct SweepRow {
  double prob_threshold = 0.0;
  std::size_t size_threshold = 0;
  PrecisionRecall pr;
};

/// `gts[i]` holds the ground-truth instances of `maps[i]`.
std::vector<SweepRow> sweep_thresholds(std::span<const ProbabilityMap> maps,
                                       std::span<const std::vector<DetectionInstance>> gts,
                                       std::span<const double> prob_thresholds,
                                       std::span<const std::size_t> size_thresholds,
                                       double iou_threshold = 0.5);

/// Pixel and instance scores at one operating point.
struct EvalReport {
  PixelMetrics pixel;
  PrecisionRecall instance;
  ExtractOptions thresholds;
};

EvalReport evaluate(std::span<const ProbabilityMap> maps, std::span<const Mask> gt_masks,
                    const ExtractOptions& opts = {}, double iou_threshold = 0.5);

// File formats.

/// "P <width> <height>\n" followed by width*height little-endian float32.
ProbabilityMap read_probability_map(const std::filesystem::path& file);
void write_probability_map(const ProbabilityMap& map, const std::filesystem::path& file);
ProbabilityMap decode_probability_map(std::string_view bytes, std::string image_id);
std::string encode_probability_map(const ProbabilityMap& map);

/// 8-bit grayscale PNG; any non-zero pixel is foreground.
Mask read_mask_png(const std::filesystem::path& file);
void write_mask_png(const Mask& m, const std::filesystem::path& file);

std::string to_jsonl(const DetectionInstance& d);
DetectionInstance detection_from_jsonl(std::string_view line);
void write_detections(std::span<const DetectionInstance> dets, const std::filesystem::path& file);
std::vector<DetectionInstance> read_detections(const std::filesystem::path& file);

}  // namespace streetcam::detect
