#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Deliberately naive: no spatial index, no run-length tricks, no QR.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <stdexcept>
#include <vector>

#include "streetcam/analysis.hpp"
#include "streetcam/detect.hpp"
#include "streetcam/geo.hpp"
#include "streetcam/ingest.hpp"

namespace oracle {

/// Instances as sorted pixel lists, the way extract_instances should see them:
/// threshold, dilate by brute force over the 3x3 neighbourhood, BFS flood
/// fill on the dilated mask, keep the original pixels, size filter.
struct PixelInstance {
  std::vector<std::pair<int, int>> pixels;  // (y, x), raster order
};

inline std::vector<PixelInstance> flood_fill_instances(const streetcam::detect::ProbabilityMap& m, double prob,
                                                       std::size_t min_size) {
  const int w = m.width, h = m.height;
  auto idx = [w](int x, int y) { return static_cast<std::size_t>(y) * w + x; };
  std::vector<char> on(static_cast<std::size_t>(w) * h, 0), grown(on.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) on[idx(x, y)] = m.at(x, y) >= prob;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool any = false;
      for (int dy = -1; dy <= 1 && !any; ++dy)
        for (int dx = -1; dx <= 1 && !any; ++dx) {
          const int nx = x + dx, ny = y + dy;
          any = nx >= 0 && ny >= 0 && nx < w && ny < h && on[idx(nx, ny)];
        }
      grown[idx(x, y)] = any;
    }
  }
  std::vector<int> label(on.size(), -1);
  std::vector<PixelInstance> out;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!grown[idx(x, y)] || label[idx(x, y)] >= 0) continue;
      const int id = static_cast<int>(out.size());
      PixelInstance inst;
      std::queue<std::pair<int, int>> q;
      q.push({x, y});
      label[idx(x, y)] = id;
      while (!q.empty()) {
        auto [cx, cy] = q.front();
        q.pop();
        if (on[idx(cx, cy)]) inst.pixels.push_back({cy, cx});
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            if (!grown[idx(nx, ny)] || label[idx(nx, ny)] >= 0) continue;
            label[idx(nx, ny)] = id;
            q.push({nx, ny});
          }
      }
      std::sort(inst.pixels.begin(), inst.pixels.end());
      out.push_back(std::move(inst));
    }
  }
  std::erase_if(out, [&](const PixelInstance& i) { return i.pixels.size() < min_size || i.pixels.empty(); });
  std::sort(out.begin(), out.end(),
            [](const PixelInstance& a, const PixelInstance& b) { return a.pixels.front() < b.pixels.front(); });
  return out;
}

inline std::vector<std::pair<int, int>> pixels_of(const streetcam::detect::DetectionInstance& d) {
  std::vector<std::pair<int, int>> px;
  for (const auto& r : d.runs)
    for (int k = 0; k < r.length; ++k) px.push_back({r.y, r.x + k});
  std::sort(px.begin(), px.end());
  return px;
}

/// Exact comparison of extract_instances output against the flood fill,
/// including bbox and size bookkeeping.
inline bool extraction_matches(const streetcam::detect::ProbabilityMap& m, double prob, std::size_t min_size) {
  const auto got = streetcam::detect::extract_instances(m, {prob, min_size});
  const auto want = flood_fill_instances(m, prob, min_size);
  if (got.size() != want.size()) return false;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const auto px = pixels_of(got[i]);
    if (px != want[i].pixels || got[i].size != px.size()) return false;
    int x0 = 1 << 30, y0 = 1 << 30, x1 = -1, y1 = -1;
    for (auto [y, x] : px) {
      x0 = std::min(x0, x), y0 = std::min(y0, y), x1 = std::max(x1, x), y1 = std::max(y1, y);
    }
    if (!(got[i].bbox == streetcam::detect::PixelBox{x0, y0, x1 - x0 + 1, y1 - y0 + 1})) return false;
    if (got[i].image_id != m.image_id) return false;
  }
  return true;
}

/// Sparse random map: mostly low values with clusters of high ones, so
/// components of every size and a few near-miss gaps show up.
inline streetcam::detect::ProbabilityMap random_map(std::mt19937_64& g, int w = 64, int h = 64) {
  streetcam::detect::ProbabilityMap m("rand", w, h);
  std::uniform_real_distribution<float> low(0.0f, 0.8f), high(0.7f, 1.0f), u(0.0f, 1.0f);
  for (auto& v : m.values) v = low(g) * 0.9f;
  std::uniform_int_distribution<int> blobs(0, 12), px(0, w - 1), py(0, h - 1), side(1, 12);
  const int n = blobs(g);
  for (int b = 0; b < n; ++b) {
    const int x0 = px(g), y0 = py(g), bw = side(g), bh = side(g);
    for (int y = y0; y < std::min(h, y0 + bh); ++y)
      for (int x = x0; x < std::min(w, x0 + bw); ++x)
        if (u(g) < 0.85f) m.at(x, y) = high(g);
  }
  return m;
}

/// Nearest parcel by scanning every parcel; ties keep the smallest index.
inline std::optional<std::uint32_t> nearest_parcel(const std::vector<streetcam::ingest::Parcel>& parcels,
                                                   streetcam::geo::LocalPoint p, double horizon) {
  std::optional<std::uint32_t> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::uint32_t i = 0; i < parcels.size(); ++i) {
    const double d = streetcam::geo::distance_point_to_polygon(p, parcels[i].shape);
    if (d < best_d) best_d = d, best = i;
  }
  if (best_d > horizon) return std::nullopt;
  return best;
}

/// Containing block group (smallest index), else the nearest boundary
/// within the fallback distance.
inline std::optional<std::uint32_t> block_group(const std::vector<streetcam::ingest::BlockGroup>& groups,
                                                streetcam::geo::LocalPoint p, double fallback) {
  for (std::uint32_t i = 0; i < groups.size(); ++i)
    if (streetcam::geo::point_in_polygon(p, groups[i].shape)) return i;
  std::optional<std::uint32_t> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::uint32_t i = 0; i < groups.size(); ++i) {
    const double d = streetcam::geo::distance_to_boundary(p, groups[i].shape);
    if (d < best_d) best_d = d, best = i;
  }
  if (best_d > fallback) return std::nullopt;
  return best;
}

/// Random axis-aligned quadrilaterals (slightly skewed) scattered over a
/// square; overlaps allowed.
inline streetcam::geo::Polygon random_quad(std::mt19937_64& g, double extent, double max_size) {
  std::uniform_real_distribution<double> pos(-extent, extent), size(5.0, max_size), jitter(-3.0, 3.0);
  const double x = pos(g), y = pos(g), w = size(g), h = size(g);
  return streetcam::geo::Polygon(streetcam::geo::Ring{
      {x + jitter(g), y + jitter(g)}, {x + w + jitter(g), y + jitter(g)}, {x + w + jitter(g), y + h + jitter(g)},
      {x + jitter(g), y + h + jitter(g)}});
}

/// Normal-equations least squares in long double with Gauss-Jordan
/// elimination (partial pivoting). Returns coefficients in column order.
inline std::vector<long double> normal_equations(const streetcam::analysis::Design& x, const std::vector<double>& y) {
  const std::size_t p = x.columns.size(), n = x.rows;
  std::vector<std::vector<long double>> a(p, std::vector<long double>(p + 1, 0.0L));
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < n; ++k) s += static_cast<long double>(x.columns[i][k]) * x.columns[j][k];
      a[i][j] = s;
    }
    long double s = 0;
    for (std::size_t k = 0; k < n; ++k) s += static_cast<long double>(x.columns[i][k]) * y[k];
    a[i][p] = s;
  }
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r)
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    if (a[c][c] == 0) throw std::runtime_error("singular normal equations");
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const long double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= p; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<long double> beta(p);
  for (std::size_t i = 0; i < p; ++i) beta[i] = a[i][p] / a[i][i];
  return beta;
}

}  // namespace oracle
