#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "streetcam/detect.hpp"

namespace streetcam::verify {

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class Conflict : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Box = detect::PixelBox;

/// One machine detection awaiting review.
struct Candidate {
  std::string image_id;
  std::string city;
  Box box;
  /// Cached image on disk, served to annotators.
  std::string image_path;
};

struct Verdict {
  std::string annotator;
  std::vector<bool> accept;  // one entry per box
  std::int64_t timestamp_ms = 0;
};

enum class TaskState { open, complete };

struct VerificationTask {
  std::uint64_t task_id = 0;
  std::string image_id;
  std::string city;
  std::string image_path;
  std::vector<Box> boxes;
  std::vector<Verdict> verdicts;
  TaskState state = TaskState::open;

  bool judged_by(std::string_view annotator) const;
};

struct VerifiedDetection {
  std::string image_id;
  std::string city;
  std::size_t box_index = 0;
  Box box;
  std::size_t accepts = 0;
  std::size_t verdicts = 0;
  bool verified = false;
};

struct ExportResult {
  std::vector<VerifiedDetection> detections;  // complete tasks only
  std::map<std::string, std::size_t> verified_per_city;
  std::map<std::string, std::size_t> positive_images_per_city;
  std::vector<std::uint64_t> incomplete_tasks;
  std::size_t quorum = 3;
  std::size_t majority = 2;
};

struct Progress {
  std::size_t tasks = 0;
  std::size_t complete = 0;
  std::size_t verdicts = 0;
  std::size_t quorum = 3;
};

struct ImportResult {
  std::size_t created = 0;
  std::size_t existing = 0;  // image already had a task
  std::size_t rejected = 0;  // unknown image
};

struct StoreOptions {
  /// Independent verdicts per task; majority is quorum / 2 + 1.
  std::size_t quorum = 3;
  /// Write a snapshot after this many journal records (0: never).
  std::size_t snapshot_every = 1000;
  /// Flush each journal record to stable storage with fsync.
  bool fsync = false;
  std::function<std::int64_t()> clock;
};

/// Task store backed by an append-only journal ("journal.jsonl": one JSON
/// record per line with a monotonic "seq") and an optional snapshot. All
/// mutations go through a single writer lock; reads share a lock and see a
/// consistent state. An empty directory path gives an in-memory store.
class TaskStore {
 public:
  explicit TaskStore(std::filesystem::path dir = {}, StoreOptions opts = {});
  ~TaskStore();
  TaskStore(const TaskStore&) = delete;
  TaskStore& operator=(const TaskStore&) = delete;

  /// Groups candidates by image into one task each. Images that already have
  /// a task are skipped; candidates failing `image_known` are rejected.
  ImportResult create_tasks(std::span<const Candidate> candidates,
                            const std::function<bool(const Candidate&)>& image_known = {});

  /// An open task the annotator has not judged, fewest verdicts first, then
  /// lowest id. The returned copy carries no verdicts.
  std::optional<VerificationTask> next_task(const std::string& annotator) const;

  /// Throws NotFound, Conflict (annotator already judged, task complete) or
  /// ValidationError (decision count, empty annotator).
  TaskState submit_verdict(std::uint64_t task_id, const std::string& annotator,
                           const std::vector<bool>& decisions);

  std::optional<VerificationTask> task(std::uint64_t task_id) const;
  std::optional<VerificationTask> task_for_image(const std::string& image_id) const;
  std::vector<VerificationTask> tasks() const;
  Progress progress() const;
  ExportResult export_verified() const;

  std::size_t quorum() const { return opts_.quorum; }
  std::size_t majority() const { return opts_.quorum / 2 + 1; }
  std::uint64_t last_seq() const;
  /// Writes a snapshot now (no-op for in-memory stores).
  void snapshot();

  /// Canonical dump of the full state, for equality checks after replay.
  std::string state_digest() const;

 private:
  void replay();
  void append(std::string record);
  void apply_task(VerificationTask t);
  void apply_verdict(std::uint64_t task_id, Verdict v);
  void write_snapshot_locked();

  std::filesystem::path dir_;
  StoreOptions opts_;
  mutable std::shared_mutex mutex_;
  std::map<std::uint64_t, VerificationTask> tasks_;
  std::map<std::string, std::uint64_t, std::less<>> by_image_;
  std::uint64_t seq_ = 0;
  std::uint64_t next_task_id_ = 1;
  std::size_t since_snapshot_ = 0;
  int journal_fd_ = -1;
};

std::string to_json(const VerifiedDetection& d);
VerifiedDetection verified_from_json(std::string_view line);
void write_verified(const ExportResult& r, const std::filesystem::path& file);
std::vector<VerifiedDetection> read_verified(const std::filesystem::path& file);
/// Verified (majority) detections per city.
std::map<std::string, std::size_t> count_verified(std::span<const VerifiedDetection> dets);

/// Candidates from detection instances of one city.
std::vector<Candidate> candidates_from(std::span<const detect::DetectionInstance> dets,
                                       const std::string& city,
                                       const std::function<std::string(const std::string&)>& image_path = {});

}  // namespace streetcam::verify
