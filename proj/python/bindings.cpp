#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "streetcam/analysis.hpp"
#include "streetcam/coverage.hpp"
#include "streetcam/detect.hpp"
#include "streetcam/error.hpp"
#include "streetcam/estimate.hpp"
#include "streetcam/pipeline.hpp"
#include "streetcam/synth.hpp"

namespace py = pybind11;
using namespace streetcam;

namespace {

py::dict estimate_dict(const estimate::CityEstimate& e) {
  py::dict d;
  d["city"] = e.city;
  d["region"] = e.region;
  d["n"] = e.n;
  d["N"] = e.n_images;
  d["c"] = e.c;
  d["r"] = e.r;
  d["p"] = e.p;
  d["k_hat"] = e.k_hat;
  d["se"] = e.se;
  d["road_length_km"] = e.road_length_km;
  d["density"] = e.density;
  d["density_se"] = e.density_se;
  d["ci95"] = py::make_tuple(e.ci95_low, e.ci95_high);
  return d;
}

detect::ProbabilityMap to_map(py::array_t<float, py::array::c_style | py::array::forcecast> a, std::string id) {
  if (a.ndim() != 2) throw py::value_error("probability map must be 2-D (height, width)");
  detect::ProbabilityMap m(std::move(id), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  auto r = a.unchecked<2>();
  for (py::ssize_t y = 0; y < r.shape(0); ++y)
    for (py::ssize_t x = 0; x < r.shape(1); ++x) m.at(static_cast<int>(x), static_cast<int>(y)) = r(y, x);
  m.validate();
  return m;
}

}  // namespace

PYBIND11_MODULE(_streetcam, m) {
  m.doc() = "Camera prevalence estimation core";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);

  m.def("version", [] { return std::string(pipeline::version()); });

  m.def(
      "estimate_city",
      [](double n, double n_images, double c, double r, double road_length_km, std::string city) {
        return estimate_dict(estimate::estimate_city(n, n_images, c, r, road_length_km, std::move(city)));
      },
      py::arg("n"), py::arg("N"), py::arg("c"), py::arg("r") = 0.63, py::arg("road_length_km"),
      py::arg("city") = "");

  m.def(
      "estimate_table",
      [](const std::string& csv, double recall) {
        py::list out;
        for (const auto& e : estimate::estimate_all(estimate::parse_inputs_csv(csv), recall)) {
          out.append(estimate_dict(e));
        }
        return out;
      },
      py::arg("csv"), py::arg("recall") = 0.63,
      "Rows of city,region,N,mean_d_m,D_km,n[,recall] text; grouped and sorted like the report.");

  m.def(
      "coverage_fraction",
      [](std::size_t n_images, double mean_d, double road_length_m) {
        return coverage::coverage_from_mean(n_images, mean_d, road_length_m).c;
      },
      py::arg("N"), py::arg("mean_d"), py::arg("road_length_m"));

  m.def("round_count", &estimate::round_count);
  m.def("round_density", &estimate::round_density);

  m.def(
      "extract_instances",
      [](py::array_t<float, py::array::c_style | py::array::forcecast> map, double prob_threshold,
         std::size_t size_threshold, std::string image_id) {
        const auto pm = to_map(map, std::move(image_id));
        py::list out;
        for (const auto& inst : detect::extract_instances(pm, {prob_threshold, size_threshold})) {
          py::dict d;
          d["image_id"] = inst.image_id;
          d["size"] = inst.size;
          d["bbox"] = py::make_tuple(inst.bbox.x, inst.bbox.y, inst.bbox.w, inst.bbox.h);
          py::list runs;
          for (const auto& r : inst.runs) runs.append(py::make_tuple(r.y, r.x, r.length));
          d["runs"] = runs;
          out.append(d);
        }
        return out;
      },
      py::arg("map"), py::arg("prob_threshold") = 0.75, py::arg("size_threshold") = 50, py::arg("image_id") = "");

  m.def(
      "ols",
      [](py::array_t<double, py::array::f_style | py::array::forcecast> x, std::vector<double> y,
         std::vector<std::string> names) {
        if (x.ndim() != 2) throw py::value_error("design must be 2-D (rows, columns)");
        const auto rows = static_cast<std::size_t>(x.shape(0));
        const auto cols = static_cast<std::size_t>(x.shape(1));
        if (names.empty())
          for (std::size_t j = 0; j < cols; ++j) names.push_back("x" + std::to_string(j));
        if (names.size() != cols) throw py::value_error("one name per column");
        analysis::Design d;
        d.rows = rows;
        auto r = x.unchecked<2>();
        for (std::size_t j = 0; j < cols; ++j) {
          std::vector<double> col(rows);
          for (std::size_t i = 0; i < rows; ++i) col[i] = r(i, j);
          d.add_column(names[j], std::move(col));
        }
        const auto fit = analysis::ols(d, y);
        py::dict out;
        for (const auto& c : fit.coefficients) {
          out[py::str(c.name)] = py::dict(py::arg("estimate") = c.estimate, py::arg("se") = c.se,
                                          py::arg("t") = c.t, py::arg("p") = c.p_value);
        }
        return py::make_tuple(out, fit.sigma2);
      },
      py::arg("x"), py::arg("y"), py::arg("names") = std::vector<std::string>{},
      "Returns ({name: {estimate, se, t, p}}, sigma2).");

  m.def(
      "calibrate",
      [](std::size_t seeds, std::size_t true_k, std::size_t n_images, double recall, std::uint64_t master_seed,
         std::size_t jobs) {
        synth::CalibrationConfig cfg;
        cfg.seeds = seeds;
        cfg.true_k = true_k;
        cfg.n_images = n_images;
        cfg.detector.recall = recall;
        cfg.master_seed = master_seed;
        cfg.jobs = jobs;
        synth::CalibrationReport rep;
        {
          py::gil_scoped_release release;
          rep = synth::end_to_end_check(cfg);
        }
        py::dict d;
        d["true_k"] = rep.true_k;
        d["mean_k_hat"] = rep.mean_k_hat;
        d["sd_k_hat"] = rep.sd_k_hat;
        d["mean_se"] = rep.mean_se;
        d["relative_bias"] = rep.relative_bias;
        d["ci_coverage"] = rep.ci_coverage;
        d["measured_recall"] = rep.measured_recall;
        std::vector<double> k_hats;
        for (const auto& r : rep.runs) k_hats.push_back(r.k_hat);
        d["k_hats"] = k_hats;
        return d;
      },
      py::arg("seeds") = 200, py::arg("true_k") = 200, py::arg("n_images") = 2000, py::arg("recall") = 0.63,
      py::arg("master_seed") = 1, py::arg("jobs") = 1,
      "Synthetic-city calibration of the estimator.");
}
