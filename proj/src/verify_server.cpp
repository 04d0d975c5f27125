#include "streetcam/verify_server.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "streetcam/io.hpp"

namespace streetcam::verify {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

json box_list(const VerificationTask& t) {
  json boxes = json::array();
  for (std::size_t i = 0; i < t.boxes.size(); ++i) {
    const auto& b = t.boxes[i];
    boxes.push_back({{"index", i}, {"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}});
  }
  return boxes;
}

json progress_json(const Progress& p) {
  return {{"tasks", p.tasks}, {"complete", p.complete}, {"open", p.tasks - p.complete},
          {"verdicts", p.verdicts}, {"quorum", p.quorum}};
}

std::vector<bool> parse_decisions(const json& body) {
  if (!body.contains("decisions") || !body["decisions"].is_array()) {
    throw ValidationError("decisions must be an array");
  }
  std::vector<bool> out;
  for (const auto& d : body["decisions"]) {
    if (d.is_boolean()) {
      out.push_back(d.get<bool>());
    } else if (d.is_string() && (d == "accept" || d == "yes" || d == "y")) {
      out.push_back(true);
    } else if (d.is_string() && (d == "reject" || d == "no" || d == "n")) {
      out.push_back(false);
    } else {
      throw ValidationError("each decision must be \"accept\" or \"reject\"");
    }
  }
  return out;
}

}  // namespace

struct VerifyServer::Impl {
  TaskStore& store;
  Options opts;
  httplib::Server server;

  Impl(TaskStore& s, Options o) : store(s), opts(std::move(o)) {
    const std::size_t threads = opts.threads;
    server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    routes();
    if (!opts.ui_dir.empty()) server.set_mount_point("/", opts.ui_dir.string());
  }

  void routes() {
    server.Get("/api/tasks/next", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string annotator = req.get_param_value("annotator");
      if (annotator.empty()) return send_error(res, 400, "annotator query parameter is required");
      auto t = store.next_task(annotator);
      if (!t) {
        return send_json(res, 200, {{"task", nullptr}, {"progress", progress_json(store.progress())}});
      }
      send_json(res, 200,
                {{"task",
                  {{"task_id", t->task_id},
                   {"image_id", t->image_id},
                   {"image_url", "/api/images/" + t->image_id},
                   {"boxes", box_list(*t)}}},
                 {"progress", progress_json(store.progress())}});
    });

    server.Post(R"(/api/tasks/(\d+)/verdict)", [this](const httplib::Request& req, httplib::Response& res) {
      std::uint64_t id = 0;
      try {
        id = std::stoull(req.matches[1].str());
      } catch (const std::exception&) {
        return send_error(res, 404, "no such task");
      }
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::parse_error&) {
        return send_error(res, 400, "body is not JSON");
      }
      try {
        if (!body.contains("annotator") || !body["annotator"].is_string()) {
          throw ValidationError("annotator is required");
        }
        const auto state = store.submit_verdict(id, body["annotator"].get<std::string>(), parse_decisions(body));
        const auto t = store.task(id);
        send_json(res, 200,
                  {{"task_id", id},
                   {"state", state == TaskState::complete ? "complete" : "open"},
                   {"verdicts", t ? t->verdicts.size() : 0}});
      } catch (const ValidationError& e) {
        send_error(res, 400, e.what());
      } catch (const NotFound& e) {
        send_error(res, 404, e.what());
      } catch (const Conflict& e) {
        send_error(res, 409, e.what());
      }
    });

    server.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, progress_json(store.progress()));
    });

    server.Get(R"(/api/images/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string image_id = req.matches[1].str();
      fs::path path;
      if (auto t = store.task_for_image(image_id); t && !t->image_path.empty()) {
        path = t->image_path;
      } else if (!opts.image_dir.empty() && image_id.find("..") == std::string::npos) {
        path = opts.image_dir / (image_id + ".png");
      }
      if (path.empty() || !fs::exists(path)) return send_error(res, 404, "no image " + image_id);
      res.set_content(io::read_file(path), "image/png");
    });

    server.Get("/api/export/verified", [this](const httplib::Request&, httplib::Response& res) {
      const auto r = store.export_verified();
      json dets = json::array();
      for (const auto& d : r.detections) dets.push_back(json::parse(to_json(d)));
      send_json(res, 200,
                {{"quorum", r.quorum},
                 {"majority", r.majority},
                 {"resolution", "majority"},
                 {"cities", r.verified_per_city},
                 {"positive_images", r.positive_images_per_city},
                 {"incomplete_tasks", r.incomplete_tasks},
                 {"detections", std::move(dets)}});
    });

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        spdlog::error("request failed: {}", e.what());
        send_error(res, 500, e.what());
      } catch (...) {
        send_error(res, 500, "internal error");
      }
    });
  }
};

VerifyServer::VerifyServer(TaskStore& store, Options opts) : impl_(std::make_unique<Impl>(store, std::move(opts))) {}

VerifyServer::~VerifyServer() { stop(); }

int VerifyServer::bind_any(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool VerifyServer::bind(const std::string& host, int port) { return impl_->server.bind_to_port(host, port); }

void VerifyServer::listen() { impl_->server.listen_after_bind(); }

void VerifyServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool VerifyServer::running() const { return impl_->server.is_running(); }

}  // namespace streetcam::verify
