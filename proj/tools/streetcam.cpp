// Command-line entry point. Exit codes: 0 success, 1 usage, 2 data error,
// 3 internal error.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <iostream>
#include <map>
#include <optional>
#include <thread>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "streetcam/analysis.hpp"
#include "streetcam/coverage.hpp"
#include "streetcam/detect.hpp"
#include "streetcam/error.hpp"
#include "streetcam/estimate.hpp"
#include "streetcam/imagery.hpp"
#include "streetcam/ingest.hpp"
#include "streetcam/io.hpp"
#include "streetcam/pipeline.hpp"
#include "streetcam/sampler.hpp"
#include "streetcam/synth.hpp"
#include "streetcam/verify.hpp"
#include "streetcam/verify_server.hpp"

namespace fs = std::filesystem;
using namespace streetcam;
using pipeline::PipelineConfig;

namespace {

struct Globals {
  fs::path config_file;
  std::vector<std::string> overrides;
  std::string log_level = "info";
  std::size_t jobs = 1;
};

PipelineConfig build_config(const Globals& g, const std::map<std::string, std::string>& flags = {}) {
  PipelineConfig cfg = g.config_file.empty() ? PipelineConfig{} : PipelineConfig::load(g.config_file);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [k, v] : flags) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

template <typename T>
void flag_into(std::map<std::string, std::string>& flags, const std::string& key, const std::optional<T>& v) {
  if (v) flags[key] = fmt::format("{}", *v);
}

pipeline::Manifest start_manifest(std::string stage, const PipelineConfig& cfg) {
  pipeline::Manifest m;
  m.stage = std::move(stage);
  m.config_hash = cfg.hash();
  m.config_text = cfg.to_text();
  return m;
}

// Runs a stage body; on failure leaves a manifest marked "failed" beside the
// intended output before rethrowing.
template <typename Fn>
void run_stage(pipeline::Manifest& m, const fs::path& primary, Fn&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    m.status = "failed";
    m.error = e.what();
    m.outputs.clear();
    try {
      if (!primary.parent_path().empty()) fs::create_directories(primary.parent_path());
      pipeline::write_manifest(m, primary);
    } catch (const std::exception&) {
    }
    throw;
  }
  pipeline::write_manifest(m, primary);
}

void ensure_parent(const fs::path& p) {
  if (!p.parent_path().empty()) fs::create_directories(p.parent_path());
}

// ---- ingest ----------------------------------------------------------------

struct IngestArgs {
  std::string city;
  ingest::CityFiles files;
  fs::path out;
};

void cmd_ingest(const Globals& g, const IngestArgs& a) {
  const auto cfg = build_config(g);
  auto m = start_manifest("ingest", cfg);
  run_stage(m, a.out, [&] {
    for (const auto* p : {&a.files.roads, &a.files.boundary, &a.files.footprints, &a.files.parcels,
                          &a.files.blockgroups, &a.files.zone_mapping}) {
      if (!p->empty() && fs::exists(*p)) m.add_input(*p);
    }
    const auto bundle = ingest::load_city(a.city, a.files);
    ensure_parent(a.out);
    ingest::save_bundle(bundle, a.out);
    m.add_output(a.out);
    spdlog::info("{}: {} road segments, {:.1f} km, {} footprints, {} parcels, {} block groups", bundle.city,
                 bundle.roads.segments.size(), bundle.roads.total_length_km(), bundle.footprints.size(),
                 bundle.parcels.size(), bundle.blockgroups.size());
  });
}

// ---- sample ----------------------------------------------------------------

void cmd_sample(const Globals& g, const fs::path& bundle_file, std::optional<std::size_t> n,
                std::optional<std::uint64_t> seed, const fs::path& out) {
  std::map<std::string, std::string> flags;
  flag_into(flags, "n_per_city", n);
  flag_into(flags, "seed", seed);
  const auto cfg = build_config(g, flags);
  auto m = start_manifest("sample", cfg);
  run_stage(m, out, [&] {
    m.add_input(bundle_file);
    const auto bundle = ingest::load_bundle(bundle_file);
    const auto points =
        sampler::sample_points(bundle.roads, bundle.projection(), cfg.n_per_city, cfg.seed, "sample:" + bundle.city);
    ensure_parent(out);
    sampler::write_samples(points, out);
    m.add_output(out);
  });
}

// ---- fetch -----------------------------------------------------------------

void cmd_fetch(const Globals& g, const fs::path& bundle_file, const fs::path& samples_file, const fs::path& cache,
               const fs::path& out, fs::path samples_out, std::optional<std::string> endpoint) {
  std::map<std::string, std::string> flags;
  flag_into(flags, "endpoint_url", endpoint);
  const auto cfg = build_config(g, flags);
  if (samples_out.empty()) samples_out = out.parent_path() / "samples.fetched.jsonl";
  auto m = start_manifest("fetch", cfg);
  run_stage(m, out, [&] {
    m.add_input(bundle_file);
    m.add_input(samples_file);
    const auto bundle = ingest::load_bundle(bundle_file);
    auto res = pipeline::fetch_city(bundle, sampler::read_samples(samples_file), cfg, cache);
    ensure_parent(out);
    pipeline::write_images(res.images, out);
    sampler::write_samples(res.points, samples_out);
    m.add_output(out);
    m.add_output(samples_out);
  });
}

// ---- detect-import -----------------------------------------------------------

void cmd_detect_import(const Globals& g, const fs::path& maps, const fs::path& detections,
                       std::optional<double> prob, std::optional<std::size_t> size, const fs::path& out) {
  std::map<std::string, std::string> flags;
  flag_into(flags, "prob_threshold", prob);
  flag_into(flags, "size_threshold", size);
  const auto cfg = build_config(g, flags);
  if (maps.empty() == detections.empty()) throw UsageError("give exactly one of --maps or --detections");
  auto m = start_manifest("detect-import", cfg);
  run_stage(m, out, [&] {
    std::vector<detect::DetectionInstance> dets;
    if (!maps.empty()) {
      for (const auto& e : fs::directory_iterator(maps)) {
        if (e.path().extension() == ".prob") m.add_input(e.path());
      }
      dets = pipeline::import_probability_maps(maps, cfg.extract_options());
    } else {
      m.add_input(detections);
      for (auto& d : detect::read_detections(detections)) {
        if (d.size >= cfg.size_threshold) dets.push_back(std::move(d));
      }
    }
    ensure_parent(out);
    detect::write_detections(dets, out);
    m.add_output(out);
    spdlog::info("{} detection instances", dets.size());
  });
}

// ---- verification ------------------------------------------------------------

verify::ImportResult import_tasks(verify::TaskStore& store, const fs::path& detections, const std::string& city,
                                  const fs::path& images) {
  std::map<std::string, std::string> paths;
  if (!images.empty()) {
    for (const auto& r : pipeline::read_images(images)) paths[r.image_id] = r.cache_path.string();
  }
  const auto dets = detect::read_detections(detections);
  auto path_of = [&](const std::string& id) {
    const auto it = paths.find(id);
    return it == paths.end() ? std::string{} : it->second;
  };
  const auto candidates = verify::candidates_from(dets, city, path_of);
  std::function<bool(const verify::Candidate&)> known;
  if (!images.empty()) known = [&](const verify::Candidate& c) { return paths.contains(c.image_id); };
  const auto res = store.create_tasks(candidates, known);
  spdlog::info("tasks: {} created, {} already present, {} rejected", res.created, res.existing, res.rejected);
  return res;
}

std::atomic<verify::VerifyServer*> g_server{nullptr};

void cmd_serve(const Globals& g, const fs::path& store_dir, int port, const std::string& host,
               const fs::path& detections, const std::string& city, const fs::path& images, const fs::path& ui) {
  const auto cfg = build_config(g);
  verify::StoreOptions so;
  so.quorum = cfg.quorum;
  verify::TaskStore store(store_dir, so);
  if (!detections.empty()) import_tasks(store, detections, city, images);
  verify::VerifyServer::Options opts;
  opts.ui_dir = ui;
  verify::VerifyServer server(store, opts);
  if (!server.bind(host, port)) throw DataError(fmt::format("cannot bind {}:{}", host, port));
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (auto* s = g_server.load()) s->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (auto* s = g_server.load()) s->stop();
  });
  spdlog::info("verification service on http://{}:{} (store {})", host, port, store_dir.string());
  server.listen();
  g_server = nullptr;
  store.snapshot();
}

void cmd_tasks(const Globals& g, const fs::path& store_dir, const fs::path& detections, const std::string& city,
               const fs::path& images) {
  const auto cfg = build_config(g);
  verify::StoreOptions so;
  so.quorum = cfg.quorum;
  verify::TaskStore store(store_dir, so);
  import_tasks(store, detections, city, images);
}

void cmd_export(const Globals& g, const fs::path& store_dir, const fs::path& out) {
  const auto cfg = build_config(g);
  auto m = start_manifest("export", cfg);
  run_stage(m, out, [&] {
    const auto journal = store_dir / "journal.jsonl";
    if (fs::exists(journal)) m.add_input(journal);
    verify::StoreOptions so;
    so.quorum = cfg.quorum;
    verify::TaskStore store(store_dir, so);
    const auto r = store.export_verified();
    if (!r.incomplete_tasks.empty()) {
      spdlog::warn("{} tasks have fewer than {} verdicts and are not exported", r.incomplete_tasks.size(),
                   r.quorum);
    }
    ensure_parent(out);
    verify::write_verified(r, out);
    m.add_output(out);
    for (const auto& [city, n] : r.verified_per_city) spdlog::info("{}: {} verified detections", city, n);
  });
}

// ---- coverage / estimate / analysis -----------------------------------------

fs::path summary_path_for(const fs::path& out) {
  fs::path p = out;
  p.replace_extension(".csv");
  return p;
}

void cmd_coverage(const Globals& g, const fs::path& bundle_file, const fs::path& samples_file, const fs::path& out,
                  fs::path summary) {
  const auto cfg = build_config(g);
  if (summary.empty()) summary = summary_path_for(out);
  auto m = start_manifest("coverage", cfg);
  run_stage(m, out, [&] {
    m.add_input(bundle_file);
    m.add_input(samples_file);
    const auto bundle = ingest::load_bundle(bundle_file);
    const auto samples = sampler::read_samples(samples_file);
    const auto records = pipeline::city_coverage_records(bundle, samples, cfg);
    const auto cov = coverage::city_coverage(records, bundle.roads.total_length_m());
    ensure_parent(out);
    coverage::write_coverage(records, out);
    const coverage::CoverageSummaryRow row{bundle.city, cov};
    io::write_file_atomic(summary, coverage::summary_csv(std::span(&row, 1)));
    m.add_output(out);
    m.add_output(summary);
    spdlog::info("{}: N = {}, mean d = {:.2f} m, c = {:.4f}", bundle.city, cov.n_images, cov.mean_d, cov.c);
  });
}

void cmd_estimate(const Globals& g, const fs::path& inputs, const std::vector<fs::path>& coverage_files,
                  const fs::path& detections, std::optional<double> recall, const fs::path& out) {
  std::map<std::string, std::string> flags;
  flag_into(flags, "recall", recall);
  const auto cfg = build_config(g, flags);
  if (inputs.empty() == coverage_files.empty()) throw UsageError("give --inputs, or --coverage with --detections");
  if (!coverage_files.empty() && detections.empty()) throw UsageError("--coverage needs --detections");
  auto m = start_manifest("estimate", cfg);
  std::vector<estimate::CityEstimate> rows;
  run_stage(m, out, [&] {
    std::vector<estimate::CityInput> in;
    if (!inputs.empty()) {
      m.add_input(inputs);
      in = estimate::parse_inputs_csv(io::read_file(inputs));
    } else {
      m.add_input(detections);
      const auto verified = verify::read_verified(detections);
      const auto counts = verify::count_verified(verified);
      for (const auto& f : coverage_files) {
        m.add_input(f);
        for (const auto& r : coverage::parse_summary_csv(io::read_file(f))) {
          estimate::CityInput ci;
          ci.city = r.city;
          ci.n = counts.contains(r.city) ? static_cast<double>(counts.at(r.city)) : 0.0;
          ci.n_images = static_cast<double>(r.coverage.n_images);
          ci.mean_d = r.coverage.mean_d;
          ci.road_length_km = r.coverage.road_length_m / 1000.0;
          in.push_back(ci);
        }
      }
    }
    rows = estimate::estimate_all(in, cfg.recall);
    ensure_parent(out);
    io::write_file_atomic(out, estimate::report_csv(rows));
    m.add_output(out);
  });
  std::cout << estimate::report_text(rows);
}

void cmd_rows(const Globals& g, const fs::path& bundle_file, const fs::path& samples_file,
              const fs::path& coverage_file, const fs::path& verified_file, const fs::path& out) {
  const auto cfg = build_config(g);
  auto m = start_manifest("rows", cfg);
  run_stage(m, out, [&] {
    for (const auto& p : {bundle_file, samples_file, coverage_file, verified_file}) m.add_input(p);
    const auto bundle = ingest::load_bundle(bundle_file);
    const auto rows = pipeline::analysis_rows(bundle, sampler::read_samples(samples_file),
                                              coverage::read_coverage(coverage_file),
                                              verify::read_verified(verified_file));
    ensure_parent(out);
    analysis::write_rows(rows, out);
    m.add_output(out);
  });
}

void cmd_analyze(const Globals& g, const std::vector<fs::path>& rows_files, const std::vector<fs::path>& outs) {
  const auto cfg = build_config(g);
  if (outs.size() != 3) throw UsageError("--out takes three files: zone_rates.csv regression.txt curve.csv");
  auto m = start_manifest("analyze", cfg);
  run_stage(m, outs[0], [&] {
    std::vector<analysis::AnalysisRow> rows;
    for (const auto& f : rows_files) {
      m.add_input(f);
      for (auto& r : analysis::read_rows(f)) rows.push_back(std::move(r));
    }
    for (const auto& o : outs) ensure_parent(o);
    io::write_file_atomic(outs[0], analysis::zone_rates_csv(analysis::zone_rates(rows)));
    io::write_file_atomic(outs[1], analysis::regression_table(analysis::fit_lpm(rows)));
    io::write_file_atomic(outs[2], analysis::curve_csv(analysis::minority_rate_curve(rows)));
    for (const auto& o : outs) m.add_output(o);
  });
}

// ---- synth ---------------------------------------------------------------------

void cmd_synth(const Globals& g, const synth::CityParams& p, const fs::path& out) {
  const auto cfg = build_config(g);
  auto m = start_manifest("synth", cfg);
  const fs::path primary = out / "city.json";
  run_stage(m, primary, [&] {
    const auto city = synth::generate_city(p);
    synth::write_city(city, out);
    for (const char* f : {"roads.geojson", "boundary.geojson", "footprints.geojson", "cameras.geojson",
                          "panoramas.json", "city.json"}) {
      m.add_output(out / f);
    }
    spdlog::info("synthetic city: {:.1f} km of road, {} cameras", city.road_length_m() / 1000.0, city.true_k());
  });
}

void cmd_synth_validate(const Globals& g, synth::CalibrationConfig cc, const fs::path& out) {
  const auto cfg = build_config(g);
  cc.master_seed = cfg.seed;
  cc.detector.recall = cfg.recall;
  cc.quorum = cfg.quorum;
  cc.jobs = g.jobs;
  auto m = start_manifest("synth-validate", cfg);
  synth::CalibrationReport rep;
  run_stage(m, out, [&] {
    rep = synth::end_to_end_check(cc);
    ensure_parent(out);
    io::write_file_atomic(out, synth::report_csv(rep));
    fs::path text = out;
    text.replace_extension(".txt");
    io::write_file_atomic(text, synth::report_text(rep));
    m.add_output(out);
    m.add_output(text);
  });
  std::cout << synth::report_text(rep);
}

// ---- fixture server --------------------------------------------------------------

std::atomic<imagery::FixtureServer*> g_fixture{nullptr};

void cmd_fixture_server(const fs::path& manifest, const std::string& host, int port) {
  auto server = imagery::FixtureServer::from_manifest(manifest);
  g_fixture = &server;
  std::signal(SIGINT, [](int) {
    if (auto* s = g_fixture.load()) s->stop();
  });
  spdlog::info("fixture imagery endpoint on http://{}:{}", host, port);
  if (!server.serve(host, port)) throw DataError(fmt::format("cannot bind {}:{}", host, port));
  g_fixture = nullptr;
}

// ---- pipeline --all ----------------------------------------------------------------

struct PipelineArgs {
  std::vector<fs::path> city_dirs;
  fs::path workdir = "work";
  fs::path fixture_manifest;
};

ingest::CityFiles city_files(const fs::path& dir) {
  ingest::CityFiles f;
  f.roads = dir / "roads.geojson";
  f.boundary = dir / "boundary.geojson";
  auto optional = [&](const char* name) { return fs::exists(dir / name) ? dir / name : fs::path{}; };
  f.footprints = optional("footprints.geojson");
  f.parcels = optional("parcels.geojson");
  f.blockgroups = optional("blockgroups.geojson");
  f.zone_mapping = optional("zones.txt");
  return f;
}

int cmd_pipeline(const Globals& g, PipelineArgs a) {
  if (a.city_dirs.empty()) throw UsageError("pipeline needs at least one --city-dir");
  std::optional<imagery::FixtureServer> fixture;
  std::map<std::string, std::string> flags;
  if (!a.fixture_manifest.empty()) {
    fixture.emplace(imagery::FixtureServer::from_manifest(a.fixture_manifest));
    const int port = fixture->start("127.0.0.1", 0);
    flags["endpoint_url"] = fmt::format("http://127.0.0.1:{}", port);
    flags["requests_per_second"] = "0";
  }
  const auto cfg = build_config(g, flags);
  fs::create_directories(a.workdir);
  io::write_file_atomic(a.workdir / "config.txt", cfg.to_text());

  // Stages 1-4 per city: ingest, sample, fetch, detect; cities in parallel.
  struct CityState {
    std::string name;
    fs::path dir;
    ingest::CityBundle bundle;
    std::vector<sampler::SamplePoint> samples;
    std::vector<imagery::ImageRecord> images;
    std::vector<detect::DetectionInstance> detections;
  };
  std::vector<CityState> cities;
  for (const auto& d : a.city_dirs) cities.push_back({d.filename().string(), d, {}, {}, {}, {}});
  if (cities.front().name.empty()) throw UsageError("city directories must not end with a slash");

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < cities.size(); i = next++) {
      auto& c = cities[i];
      try {
        const fs::path out = a.workdir / c.name;
        fs::create_directories(out);
        c.bundle = ingest::load_city(c.name, city_files(c.dir));
        ingest::save_bundle(c.bundle, out / "bundle.bin");
        auto points = sampler::sample_points(c.bundle.roads, c.bundle.projection(), cfg.n_per_city, cfg.seed,
                                             "sample:" + c.name);
        sampler::write_samples(points, out / "samples.jsonl");
        auto fetched = pipeline::fetch_city(c.bundle, std::move(points), cfg, a.workdir / "cache");
        c.samples = std::move(fetched.points);
        c.images = std::move(fetched.images);
        sampler::write_samples(c.samples, out / "samples.fetched.jsonl");
        pipeline::write_images(c.images, out / "images.jsonl");
        if (fs::is_directory(c.dir / "maps")) {
          c.detections = pipeline::import_probability_maps(c.dir / "maps", cfg.extract_options());
        } else if (fs::exists(c.dir / "detections.jsonl")) {
          c.detections = detect::read_detections(c.dir / "detections.jsonl");
        }
        detect::write_detections(c.detections, out / "detections.jsonl");
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  {
    std::vector<std::thread> pool;
    for (std::size_t j = 1; j < std::min(g.jobs, cities.size()); ++j) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  // Stage 5: verification.
  verify::StoreOptions so;
  so.quorum = cfg.quorum;
  verify::TaskStore store(a.workdir / "store", so);
  for (auto& c : cities) {
    std::map<std::string, std::string> paths;
    for (const auto& r : c.images) paths[r.image_id] = r.cache_path.string();
    const auto cands = verify::candidates_from(c.detections, c.name, [&](const std::string& id) {
      const auto it = paths.find(id);
      return it == paths.end() ? std::string{} : it->second;
    });
    store.create_tasks(cands, [&](const verify::Candidate& cand) { return paths.contains(cand.image_id); });
  }
  const auto exported = store.export_verified();
  if (!exported.incomplete_tasks.empty()) {
    const auto p = store.progress();
    std::cout << fmt::format(
        "verification pending: {} of {} tasks complete. Run `streetcam serve --store {}` and re-run this "
        "command once every task has {} verdicts.\n",
        p.complete, p.tasks, (a.workdir / "store").string(), cfg.quorum);
    return 0;
  }
  verify::write_verified(exported, a.workdir / "verified.jsonl");

  // Stages 6-8: coverage, estimate, analysis.
  std::vector<coverage::CoverageSummaryRow> summary;
  std::vector<estimate::CityInput> inputs;
  std::vector<analysis::AnalysisRow> rows;
  for (auto& c : cities) {
    const auto records = pipeline::city_coverage_records(c.bundle, c.samples, cfg);
    coverage::write_coverage(records, a.workdir / c.name / "coverage.jsonl");
    const auto cov = coverage::city_coverage(records, c.bundle.roads.total_length_m());
    summary.push_back({c.name, cov});
    estimate::CityInput ci;
    ci.city = c.name;
    const auto it = exported.verified_per_city.find(c.name);
    ci.n = it == exported.verified_per_city.end() ? 0.0 : static_cast<double>(it->second);
    ci.n_images = static_cast<double>(cov.n_images);
    ci.mean_d = cov.mean_d;
    ci.road_length_km = cov.road_length_m / 1000.0;
    inputs.push_back(ci);
    for (auto& r : pipeline::analysis_rows(c.bundle, c.samples, records, exported.detections)) {
      rows.push_back(std::move(r));
    }
  }
  io::write_file_atomic(a.workdir / "coverage.csv", coverage::summary_csv(summary));
  const auto table = estimate::estimate_all(inputs, cfg.recall);
  io::write_file_atomic(a.workdir / "table.csv", estimate::report_csv(table));
  analysis::write_rows(rows, a.workdir / "rows.jsonl");
  io::write_file_atomic(a.workdir / "zone_rates.csv", analysis::zone_rates_csv(analysis::zone_rates(rows)));
  try {
    io::write_file_atomic(a.workdir / "regression.txt", analysis::regression_table(analysis::fit_lpm(rows)));
    io::write_file_atomic(a.workdir / "curve.csv", analysis::curve_csv(analysis::minority_rate_curve(rows)));
  } catch (const DataError& e) {
    spdlog::warn("regression skipped: {}", e.what());
  }

  auto m = start_manifest("pipeline", cfg);
  for (const auto& c : cities) {
    for (const auto& p : {c.dir / "roads.geojson", c.dir / "boundary.geojson"}) m.add_input(p);
  }
  for (const char* f : {"table.csv", "coverage.csv", "verified.jsonl", "rows.jsonl", "zone_rates.csv"}) {
    m.add_output(a.workdir / f);
  }
  pipeline::write_manifest(m, a.workdir / "table.csv");
  std::cout << estimate::report_text(table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Street-level surveillance camera prevalence pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(pipeline::version()));
  Globals g;
  app.add_option("--config", g.config_file, "Key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "Override a config key (key=value); repeatable");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Cities (or seeds) processed in parallel")->capture_default_str();

  std::function<int()> action;

  IngestArgs ingest_args;
  auto* ingest_cmd = app.add_subcommand("ingest", "Load and project one city's layers into a bundle");
  ingest_cmd->add_option("--city", ingest_args.city)->required();
  ingest_cmd->add_option("--roads", ingest_args.files.roads)->required();
  ingest_cmd->add_option("--boundary", ingest_args.files.boundary)->required();
  ingest_cmd->add_option("--footprints", ingest_args.files.footprints);
  ingest_cmd->add_option("--parcels", ingest_args.files.parcels);
  ingest_cmd->add_option("--blockgroups", ingest_args.files.blockgroups);
  ingest_cmd->add_option("--zones", ingest_args.files.zone_mapping, "Zone mapping file");
  ingest_cmd->add_option("--out", ingest_args.out)->required();
  ingest_cmd->callback([&] { action = [&] { cmd_ingest(g, ingest_args); return 0; }; });

  fs::path bundle, samples, out, cache = "cache", samples_out, maps, detections, store_dir = "store", images, ui,
                                summary, inputs, verified_file, coverage_file;
  std::optional<std::size_t> n, size_threshold;
  std::optional<std::uint64_t> seed;
  std::optional<double> recall, prob;
  std::optional<std::string> endpoint;
  std::string city, host = "127.0.0.1";
  int port = 8080;

  auto* sample_cmd = app.add_subcommand("sample", "Draw length-weighted road sample points");
  sample_cmd->add_option("--bundle", bundle)->required();
  sample_cmd->add_option("--n", n, "Points per city");
  sample_cmd->add_option("--seed", seed);
  sample_cmd->add_option("--out", out)->required();
  sample_cmd->callback([&] { action = [&] { cmd_sample(g, bundle, n, seed, out); return 0; }; });

  auto* fetch_cmd = app.add_subcommand("fetch", "Availability check and image download with caching");
  fetch_cmd->add_option("--bundle", bundle)->required();
  fetch_cmd->add_option("--samples", samples)->required();
  fetch_cmd->add_option("--cache", cache)->capture_default_str();
  fetch_cmd->add_option("--endpoint", endpoint, "Imagery endpoint base URL");
  fetch_cmd->add_option("--out", out, "Image records (JSONL)")->required();
  fetch_cmd->add_option("--samples-out", samples_out, "Updated sample points");
  fetch_cmd->callback([&] {
    action = [&] { cmd_fetch(g, bundle, samples, cache, out, samples_out, endpoint); return 0; };
  });

  auto* detect_cmd = app.add_subcommand("detect-import", "Turn probability maps or detector output into instances");
  detect_cmd->add_option("--maps", maps, "Directory of .prob maps");
  detect_cmd->add_option("--detections", detections, "Detection instances (JSONL)");
  detect_cmd->add_option("--prob-threshold", prob);
  detect_cmd->add_option("--size-threshold", size_threshold);
  detect_cmd->add_option("--out", out)->required();
  detect_cmd->callback([&] {
    action = [&] { cmd_detect_import(g, maps, detections, prob, size_threshold, out); return 0; };
  });

  auto* tasks_cmd = app.add_subcommand("tasks", "Create verification tasks from detections");
  tasks_cmd->add_option("--store", store_dir)->required();
  tasks_cmd->add_option("--detections", detections)->required();
  tasks_cmd->add_option("--city", city)->required();
  tasks_cmd->add_option("--images", images, "Image records; candidates for unknown images are rejected");
  tasks_cmd->callback([&] { action = [&] { cmd_tasks(g, store_dir, detections, city, images); return 0; }; });

  auto* serve_cmd = app.add_subcommand("serve", "Run the verification service");
  serve_cmd->add_option("--store", store_dir)->required();
  serve_cmd->add_option("--port", port)->capture_default_str();
  serve_cmd->add_option("--host", host)->capture_default_str();
  serve_cmd->add_option("--detections", detections, "Import tasks before serving");
  serve_cmd->add_option("--city", city);
  serve_cmd->add_option("--images", images);
  serve_cmd->add_option("--ui", ui, "Static annotator app directory");
  serve_cmd->callback([&] {
    action = [&] {
      if (!detections.empty() && city.empty()) throw UsageError("--detections needs --city");
      cmd_serve(g, store_dir, port, host, detections, city, images, ui);
      return 0;
    };
  });

  auto* export_cmd = app.add_subcommand("export", "Export majority-verified detections");
  export_cmd->add_option("--store", store_dir)->required();
  export_cmd->add_option("--out", out)->required();
  export_cmd->callback([&] { action = [&] { cmd_export(g, store_dir, out); return 0; }; });

  auto* coverage_cmd = app.add_subcommand("coverage", "Per-image coverage and city coverage fraction");
  coverage_cmd->add_option("--bundle", bundle)->required();
  coverage_cmd->add_option("--samples", samples)->required();
  coverage_cmd->add_option("--out", out)->required();
  coverage_cmd->add_option("--summary", summary, "Summary CSV (default: <out>.csv)");
  coverage_cmd->callback([&] { action = [&] { cmd_coverage(g, bundle, samples, out, summary); return 0; }; });

  std::vector<fs::path> coverage_files;
  auto* estimate_cmd = app.add_subcommand("estimate", "City camera counts, densities and standard errors");
  estimate_cmd->add_option("--inputs", inputs, "CSV: city,region,N,mean_d_m,D_km,n[,recall]");
  estimate_cmd->add_option("--coverage", coverage_files, "Coverage summary CSV(s)");
  estimate_cmd->add_option("--detections", detections, "Verified detections (JSONL)");
  estimate_cmd->add_option("--recall", recall);
  estimate_cmd->add_option("--out", out)->required();
  estimate_cmd->callback([&] {
    action = [&] { cmd_estimate(g, inputs, coverage_files, detections, recall, out); return 0; };
  });

  auto* rows_cmd = app.add_subcommand("rows", "Join samples with zoning and demographics for analysis");
  rows_cmd->add_option("--bundle", bundle)->required();
  rows_cmd->add_option("--samples", samples)->required();
  rows_cmd->add_option("--coverage", coverage_file)->required();
  rows_cmd->add_option("--verified", verified_file)->required();
  rows_cmd->add_option("--out", out)->required();
  rows_cmd->callback([&] {
    action = [&] { cmd_rows(g, bundle, samples, coverage_file, verified_file, out); return 0; };
  });

  std::vector<fs::path> rows_files, analyze_outs;
  auto* analyze_cmd = app.add_subcommand("analyze", "Zone rates, linear probability model and minority curve");
  analyze_cmd->add_option("--rows", rows_files)->required();
  analyze_cmd->add_option("--out", analyze_outs, "zone_rates.csv regression.txt curve.csv")->required()->expected(3);
  analyze_cmd->callback([&] { action = [&] { cmd_analyze(g, rows_files, analyze_outs); return 0; }; });

  synth::CityParams city_params;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic grid city with planted cameras");
  synth_cmd->add_option("--rows", city_params.rows)->capture_default_str();
  synth_cmd->add_option("--cols", city_params.cols)->capture_default_str();
  synth_cmd->add_option("--spacing", city_params.spacing)->capture_default_str();
  synth_cmd->add_option("--setback", city_params.setback)->capture_default_str();
  synth_cmd->add_option("--density", city_params.density_per_km, "Cameras per km of road")->capture_default_str();
  synth_cmd->add_option("--seed", city_params.seed)->capture_default_str();
  synth_cmd->add_option("--out", out)->required();
  synth_cmd->callback([&] { action = [&] { cmd_synth(g, city_params, out); return 0; }; });

  synth::CalibrationConfig calib;
  auto* validate_cmd = app.add_subcommand("synth-validate", "Monte-Carlo calibration of the full estimator");
  validate_cmd->add_option("--seeds", calib.seeds)->capture_default_str();
  validate_cmd->add_option("--k", calib.true_k, "Planted cameras per city")->capture_default_str();
  validate_cmd->add_option("--images", calib.n_images, "Images per city")->capture_default_str();
  validate_cmd->add_option("--rows", calib.city.rows)->capture_default_str();
  validate_cmd->add_option("--cols", calib.city.cols)->capture_default_str();
  validate_cmd->add_option("--spacing", calib.city.spacing)->capture_default_str();
  validate_cmd->add_option("--setback", calib.city.setback)->capture_default_str();
  validate_cmd->add_option("--fp-rate", calib.detector.fp_rate, "False positives per image")->capture_default_str();
  validate_cmd->add_option("--out", out, "Per-seed CSV; a .txt summary is written beside it")->required();
  validate_cmd->callback([&] { action = [&] { cmd_synth_validate(g, calib, out); return 0; }; });

  fs::path fixture_manifest;
  auto* fixture_cmd = app.add_subcommand("fixture-server", "Serve fixture panoramas on the imagery protocol");
  fixture_cmd->add_option("--manifest", fixture_manifest)->required()->check(CLI::ExistingFile);
  fixture_cmd->add_option("--host", host)->capture_default_str();
  fixture_cmd->add_option("--port", port)->capture_default_str();
  fixture_cmd->callback([&] {
    action = [&] { cmd_fixture_server(fixture_manifest, host, port); return 0; };
  });

  PipelineArgs pargs;
  bool all = false;
  auto* pipeline_cmd = app.add_subcommand("pipeline", "Run every stage in order");
  pipeline_cmd->add_flag("--all", all, "Run all stages")->required();
  pipeline_cmd->add_option("--city-dir", pargs.city_dirs, "City input directory; repeatable")->required();
  pipeline_cmd->add_option("--workdir", pargs.workdir)->capture_default_str();
  pipeline_cmd->add_option("--fixture", pargs.fixture_manifest, "Serve this panorama manifest in-process");
  pipeline_cmd->callback([&] { action = [&] { return cmd_pipeline(g, pargs); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(g.log_level));
    spdlog::set_default_logger(spdlog::stderr_color_mt("streetcam"));
    spdlog::set_level(spdlog::level::from_str(g.log_level));
    if (g.jobs < 1) throw UsageError("--jobs must be at least 1");
    return action();
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const DataError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return 3;
  }
}
