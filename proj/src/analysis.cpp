#include "streetcam/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "streetcam/error.hpp"
#include "streetcam/io.hpp"

namespace streetcam::analysis {

using json = nlohmann::json;

namespace {

constexpr ZoneCategory kReportedZones[] = {ZoneCategory::mixed, ZoneCategory::industrial,
                                           ZoneCategory::commercial, ZoneCategory::public_,
                                           ZoneCategory::residential};

// Display names for the zone indicators, in table order.
constexpr std::pair<ZoneCategory, const char*> kZoneColumns[] = {
    {ZoneCategory::public_, "Public"},
    {ZoneCategory::commercial, "Commercial"},
    {ZoneCategory::industrial, "Industrial"},
    {ZoneCategory::mixed, "Mixed"},
};

constexpr const char* kMinority = "Percentage minority";
constexpr const char* kMinority2 = "Percentage minority^2";

std::string with_thousands(std::size_t v) {
  std::string digits = std::to_string(v);
  for (int i = static_cast<int>(digits.size()) - 3; i > 0; i -= 3) digits.insert(static_cast<std::size_t>(i), ",");
  return digits;
}

template <typename Score>
std::optional<std::uint32_t> argmin_by_id(const std::vector<std::uint32_t>& candidates, Score&& score,
                                          double limit) {
  std::optional<std::uint32_t> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (auto id : candidates) {  // candidates are sorted, so ties keep the smallest id
    const double d = score(id);
    if (d < best_d) {
      best_d = d;
      best = id;
    }
  }
  if (best && best_d > limit) return std::nullopt;
  return best;
}

}  // namespace

ZoneAssigner::ZoneAssigner(const std::vector<ingest::Parcel>& parcels, double horizon)
    : parcels_(&parcels),
      index_(geo::build_index(parcels, [](const ingest::Parcel& p) { return p.shape.bbox(); })),
      horizon_(horizon) {}

std::optional<std::uint32_t> ZoneAssigner::nearest_parcel(geo::LocalPoint p) const {
  return argmin_by_id(
      index_.query(p, horizon_),
      [&](std::uint32_t id) { return geo::distance_point_to_polygon(p, (*parcels_)[id].shape); }, horizon_);
}

ZoneCategory ZoneAssigner::assign(geo::LocalPoint p) const {
  auto id = nearest_parcel(p);
  return id ? (*parcels_)[*id].zone : ZoneCategory::unknown;
}

DemographicAssigner::DemographicAssigner(const std::vector<ingest::BlockGroup>& groups, double fallback)
    : groups_(&groups),
      index_(geo::build_index(groups, [](const ingest::BlockGroup& g) { return g.shape.bbox(); })),
      fallback_(fallback) {}

std::optional<std::uint32_t> DemographicAssigner::block_group(geo::LocalPoint p) const {
  const auto candidates = index_.query(p, fallback_);
  for (auto id : candidates) {
    if (geo::point_in_polygon(p, (*groups_)[id].shape)) return id;
  }
  return argmin_by_id(
      candidates, [&](std::uint32_t id) { return geo::distance_to_boundary(p, (*groups_)[id].shape); },
      fallback_);
}

std::optional<double> DemographicAssigner::assign(geo::LocalPoint p) const {
  auto id = block_group(p);
  if (!id) return std::nullopt;
  return (*groups_)[*id].minority_share;
}

ZoneCategory assign_zone(geo::LocalPoint p, const ZoneAssigner& assigner) { return assigner.assign(p); }

std::optional<double> assign_demographics(geo::LocalPoint p, const DemographicAssigner& assigner) {
  return assigner.assign(p);
}

std::vector<ZoneRate> zone_rates(std::span<const AnalysisRow> rows) {
  std::map<ZoneCategory, ZoneRate> acc;
  for (const auto& r : rows) {
    if (r.zone == ZoneCategory::unknown) continue;
    auto& z = acc[r.zone];
    z.zone = r.zone;
    ++z.images;
    z.detections += r.detected ? 1 : 0;
  }
  std::vector<ZoneRate> out;
  for (auto zone : kReportedZones) {
    auto it = acc.find(zone);
    if (it == acc.end()) continue;
    ZoneRate z = it->second;
    const double n = static_cast<double>(z.images);
    z.rate = static_cast<double>(z.detections) / n;
    const double half = 1.96 * std::sqrt(z.rate * (1.0 - z.rate) / n);
    z.ci_low = std::max(0.0, z.rate - half);
    z.ci_high = std::min(1.0, z.rate + half);
    out.push_back(z);
  }
  return out;
}

std::string zone_rates_csv(std::span<const ZoneRate> rates) {
  std::string out = "zone,images,detections,rate,ci95_low,ci95_high\n";
  for (const auto& z : rates) {
    out += fmt::format("{},{},{},{},{},{}\n", ingest::to_string(z.zone), z.images, z.detections, z.rate,
                       z.ci_low, z.ci_high);
  }
  return out;
}

const Coefficient& RegressionResult::at(std::string_view name) const {
  for (const auto& c : coefficients) {
    if (c.name == name) return c;
  }
  throw std::out_of_range("no coefficient named " + std::string(name));
}

void Design::add_column(std::string name, std::vector<double> values) {
  if (columns.empty() && rows == 0) rows = values.size();
  if (values.size() != rows) throw DataError("design column " + name + " has the wrong length");
  names.push_back(std::move(name));
  columns.push_back(std::move(values));
}

RegressionResult ols(const Design& x, std::span<const double> y, bool keep_residuals) {
  const std::size_t n = x.rows;
  const std::size_t p = x.columns.size();
  if (y.size() != n) throw DataError("outcome length does not match the design");
  if (p == 0) throw DataError("empty design");
  if (n <= p) throw DataError("need more observations than coefficients");

  // Householder QR on a working copy; qty accumulates Q'y.
  std::vector<std::vector<double>> a = x.columns;
  std::vector<double> qty(y.begin(), y.end());
  std::vector<double> col_norm(p);
  for (std::size_t j = 0; j < p; ++j) {
    double s = 0.0;
    for (double v : a[j]) s += v * v;
    col_norm[j] = std::sqrt(s);
  }

  for (std::size_t k = 0; k < p; ++k) {
    auto& ak = a[k];
    double norm = 0.0;
    for (std::size_t i = k; i < n; ++i) norm += ak[i] * ak[i];
    norm = std::sqrt(norm);
    if (!(norm > 1e-10 * col_norm[k]) || col_norm[k] == 0.0) {
      std::string msg = "rank-deficient design: column '" + x.names[k] + "' is collinear with";
      if (k == 0) {
        msg += " nothing (it is all zero)";
      } else {
        for (std::size_t j = 0; j < k; ++j) msg += (j ? ", '" : " '") + x.names[j] + "'";
      }
      throw DataError(msg);
    }
    const double alpha = ak[k] > 0.0 ? -norm : norm;
    // v = ak[k:] - alpha e1, stored in place; beta = 2 / v'v.
    ak[k] -= alpha;
    double vtv = 0.0;
    for (std::size_t i = k; i < n; ++i) vtv += ak[i] * ak[i];
    auto reflect = [&](std::vector<double>& c) {
      double s = 0.0;
      for (std::size_t i = k; i < n; ++i) s += ak[i] * c[i];
      const double f = 2.0 * s / vtv;
      for (std::size_t i = k; i < n; ++i) c[i] -= f * ak[i];
    };
    for (std::size_t j = k + 1; j < p; ++j) reflect(a[j]);
    reflect(qty);
    ak[k] = alpha;  // R diagonal; below-diagonal entries are no longer needed
  }

  // Back substitution: R beta = (Q'y)[0:p]. R(i, j) lives in a[j][i].
  std::vector<double> beta(p);
  for (std::size_t ii = p; ii-- > 0;) {
    double s = qty[ii];
    for (std::size_t j = ii + 1; j < p; ++j) s -= a[j][ii] * beta[j];
    beta[ii] = s / a[ii][ii];
  }

  // R^-1, column by column, for diag((X'X)^-1) = row sums of squares of R^-1.
  std::vector<std::vector<double>> rinv(p, std::vector<double>(p, 0.0));  // rinv[row][col]
  for (std::size_t col = 0; col < p; ++col) {
    for (std::size_t row = col + 1; row-- > 0;) {
      double s = row == col ? 1.0 : 0.0;
      for (std::size_t j = row + 1; j <= col; ++j) s -= a[j][row] * rinv[j][col];
      rinv[row][col] = s / a[row][row];
    }
  }

  RegressionResult res;
  res.observations = n;
  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i) {
    double fit = 0.0;
    for (std::size_t j = 0; j < p; ++j) fit += x.columns[j][i] * beta[j];
    resid[i] = y[i] - fit;
    res.rss += resid[i] * resid[i];
  }
  const double dof = static_cast<double>(n - p);
  res.sigma2 = res.rss / dof;
  boost::math::students_t dist(dof);
  for (std::size_t j = 0; j < p; ++j) {
    double d = 0.0;
    for (std::size_t k = j; k < p; ++k) d += rinv[j][k] * rinv[j][k];
    Coefficient c;
    c.name = x.names[j];
    c.estimate = beta[j];
    c.se = std::sqrt(res.sigma2 * d);
    if (c.se > 0.0) {
      c.t = c.estimate / c.se;
      c.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(c.t)));
    } else {
      c.t = c.estimate == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), c.estimate);
      c.p_value = c.estimate == 0.0 ? 1.0 : 0.0;
    }
    res.coefficients.push_back(std::move(c));
  }
  if (keep_residuals) res.residuals = std::move(resid);
  return res;
}

Design lpm_design(std::span<const AnalysisRow> rows, std::vector<double>& y) {
  std::vector<const AnalysisRow*> kept;
  std::vector<std::string> cities;
  for (const auto& r : rows) {
    if (r.zone == ZoneCategory::unknown || !r.minority_share) continue;
    kept.push_back(&r);
    if (std::find(cities.begin(), cities.end(), r.city) == cities.end()) cities.push_back(r.city);
  }
  std::sort(cities.begin(), cities.end());

  Design d;
  d.rows = kept.size();
  y.assign(kept.size(), 0.0);
  for (std::size_t i = 0; i < kept.size(); ++i) y[i] = kept[i]->detected ? 1.0 : 0.0;

  for (const auto& city : cities) {
    std::vector<double> col(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) col[i] = kept[i]->city == city ? 1.0 : 0.0;
    d.add_column("city:" + city, std::move(col));
  }
  for (const auto& [zone, name] : kZoneColumns) {
    std::vector<double> col(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) col[i] = kept[i]->zone == zone ? 1.0 : 0.0;
    d.add_column(name, std::move(col));
  }
  std::vector<double> m(kept.size()), m2(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    m[i] = *kept[i]->minority_share;
    m2[i] = m[i] * m[i];
  }
  d.add_column(kMinority, std::move(m));
  d.add_column(kMinority2, std::move(m2));
  return d;
}

RegressionResult fit_lpm(std::span<const AnalysisRow> rows) {
  std::vector<double> y;
  const Design d = lpm_design(rows, y);
  return ols(d, y);
}

std::string significance_stars(double p) {
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.1) return "*";
  return "";
}

std::string regression_table(const RegressionResult& r, bool show_cities) {
  std::string out = fmt::format("{:<28}{:>24}\n", "", "Identification Rate");
  out += std::string(52, '-') + "\n";
  for (const auto& c : r.coefficients) {
    if (!show_cities && c.name.starts_with("city:")) continue;
    const std::string cell = fmt::format("{:.4f}{:<3} ({:.4f})", c.estimate, significance_stars(c.p_value), c.se);
    out += fmt::format("{:<28}{:>24}\n", c.name, cell);
  }
  out += std::string(52, '-') + "\n";
  out += fmt::format("{:<28}{:>24}\n", "Observations", with_thousands(r.observations));
  out += std::string(52, '-') + "\n";
  out += "Note: *p<0.1; **p<0.05; ***p<0.01\n";
  out += "Reference zone: residential. City fixed effects included.\n";
  out += "Classical (homoskedastic) OLS standard errors.\n";
  return out;
}

RateCurve minority_rate_curve(std::span<const AnalysisRow> rows, std::size_t bins, std::size_t grid_points) {
  if (bins == 0) throw DataError("need at least one bin");
  RateCurve curve;
  for (std::size_t b = 0; b < bins; ++b) {
    curve.bins.push_back({static_cast<double>(b) / bins, static_cast<double>(b + 1) / bins, 0, 0, 0.0});
  }
  Design d;
  std::vector<double> one, m, m2, y;
  for (const auto& r : rows) {
    if (!r.minority_share) continue;
    const double s = *r.minority_share;
    auto b = std::min(bins - 1, static_cast<std::size_t>(s * static_cast<double>(bins)));
    ++curve.bins[b].images;
    curve.bins[b].detections += r.detected ? 1 : 0;
    one.push_back(1.0);
    m.push_back(s);
    m2.push_back(s * s);
    y.push_back(r.detected ? 1.0 : 0.0);
  }
  for (auto& b : curve.bins) {
    b.rate = b.images ? static_cast<double>(b.detections) / static_cast<double>(b.images) : 0.0;
  }
  d.add_column("Intercept", std::move(one));
  d.add_column(kMinority, std::move(m));
  d.add_column(kMinority2, std::move(m2));
  curve.fit = ols(d, y);
  const double b0 = curve.fit.coefficients[0].estimate;
  const double b1 = curve.fit.coefficients[1].estimate;
  const double b2 = curve.fit.coefficients[2].estimate;
  for (std::size_t g = 0; g < grid_points; ++g) {
    const double s = grid_points > 1 ? static_cast<double>(g) / static_cast<double>(grid_points - 1) : 0.0;
    curve.fitted.emplace_back(s, b0 + b1 * s + b2 * s * s);
  }
  return curve;
}

std::string curve_csv(const RateCurve& curve) {
  std::string out = "kind,share_lo,share_hi,images,detections,rate\n";
  for (const auto& b : curve.bins) {
    out += fmt::format("bin,{},{},{},{},{}\n", b.lo, b.hi, b.images, b.detections, b.rate);
  }
  for (const auto& [s, v] : curve.fitted) out += fmt::format("fit,{},{},,,{}\n", s, s, v);
  return out;
}

std::string to_jsonl(const AnalysisRow& r) {
  json j{{"sample_id", r.sample_id},
         {"city", r.city},
         {"detected", r.detected},
         {"zone", ingest::to_string(r.zone)}};
  j["minority_share"] = r.minority_share ? json(*r.minority_share) : json(nullptr);
  return j.dump();
}

AnalysisRow row_from_jsonl(std::string_view line) {
  const json j = json::parse(line);
  AnalysisRow r;
  r.sample_id = j.at("sample_id").get<std::uint64_t>();
  r.city = j.at("city").get<std::string>();
  r.detected = j.at("detected").get<int>() ? 1 : 0;
  auto zone = ingest::parse_zone(j.at("zone").get<std::string>());
  if (!zone) throw DataError("unknown zone name " + j.at("zone").get<std::string>());
  r.zone = *zone;
  if (j.contains("minority_share") && !j["minority_share"].is_null()) {
    r.minority_share = j["minority_share"].get<double>();
  }
  return r;
}

void write_rows(std::span<const AnalysisRow> rows, const std::filesystem::path& file) {
  io::AtomicWriter out(file);
  for (const auto& r : rows) out.stream() << to_jsonl(r) << '\n';
  out.commit();
}

std::vector<AnalysisRow> read_rows(const std::filesystem::path& file) {
  std::vector<AnalysisRow> out;
  io::for_each_line(file, [&](std::string_view line, std::size_t n) {
    try {
      out.push_back(row_from_jsonl(line));
    } catch (const std::exception& e) {
      throw DataError(file.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace streetcam::analysis
