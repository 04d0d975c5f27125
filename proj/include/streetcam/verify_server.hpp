#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "streetcam/verify.hpp"

namespace streetcam::verify {

/// HTTP JSON front end for a TaskStore.
///
///   GET  /api/tasks/next?annotator=<id>
///   POST /api/tasks/<id>/verdict   {"annotator": "...", "decisions": ["accept", "reject", ...]}
///   GET  /api/progress
///   GET  /api/images/<image id>
///   GET  /api/export/verified
///
/// Status codes: 400 validation, 404 unknown task or image, 409 conflict.
class VerifyServer {
 public:
  struct Options {
    /// Fallback lookup for images whose task has no path: <dir>/<image id>.png
    std::filesystem::path image_dir;
    /// Static files for the annotator app, mounted at "/".
    std::filesystem::path ui_dir;
    std::size_t threads = 8;
  };

  VerifyServer(TaskStore& store, Options opts);
  ~VerifyServer();
  VerifyServer(const VerifyServer&) = delete;
  VerifyServer& operator=(const VerifyServer&) = delete;

  /// Binds an ephemeral port on host and returns it (-1 on failure).
  int bind_any(const std::string& host = "127.0.0.1");
  bool bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void listen();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace streetcam::verify
