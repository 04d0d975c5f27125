#include "streetcam/verify.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <mutex>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "streetcam/error.hpp"
#include "streetcam/io.hpp"

namespace streetcam::verify {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kJournal = "journal.jsonl";
constexpr const char* kSnapshot = "snapshot.json";

json box_json(const Box& b) { return json::array({b.x, b.y, b.w, b.h}); }

Box box_from(const json& j) {
  return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>()};
}

json task_json(const VerificationTask& t) {
  json boxes = json::array();
  for (const auto& b : t.boxes) boxes.push_back(box_json(b));
  json verdicts = json::array();
  for (const auto& v : t.verdicts) {
    verdicts.push_back({{"annotator", v.annotator}, {"accept", v.accept}, {"ts", v.timestamp_ms}});
  }
  return {{"task_id", t.task_id},   {"image_id", t.image_id}, {"city", t.city},
          {"image_path", t.image_path}, {"boxes", std::move(boxes)}, {"verdicts", std::move(verdicts)}};
}

VerificationTask task_from(const json& j) {
  VerificationTask t;
  t.task_id = j.at("task_id").get<std::uint64_t>();
  t.image_id = j.at("image_id").get<std::string>();
  t.city = j.value("city", "");
  t.image_path = j.value("image_path", "");
  for (const auto& b : j.at("boxes")) t.boxes.push_back(box_from(b));
  if (j.contains("verdicts")) {
    for (const auto& v : j["verdicts"]) {
      t.verdicts.push_back({v.at("annotator").get<std::string>(), v.at("accept").get<std::vector<bool>>(),
                            v.value("ts", std::int64_t{0})});
    }
  }
  return t;
}

std::int64_t wall_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

bool VerificationTask::judged_by(std::string_view annotator) const {
  return std::any_of(verdicts.begin(), verdicts.end(), [&](const Verdict& v) { return v.annotator == annotator; });
}

TaskStore::TaskStore(fs::path dir, StoreOptions opts) : dir_(std::move(dir)), opts_(std::move(opts)) {
  if (opts_.quorum == 0) throw ValidationError("quorum must be at least 1");
  if (!opts_.clock) opts_.clock = wall_clock_ms;
  if (dir_.empty()) return;
  fs::create_directories(dir_);
  replay();
  journal_fd_ = ::open((dir_ / kJournal).c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (journal_fd_ < 0) throw DataError("cannot open journal in " + dir_.string());
}

TaskStore::~TaskStore() {
  if (journal_fd_ >= 0) ::close(journal_fd_);
}

void TaskStore::replay() {
  std::uint64_t snapshot_seq = 0;
  const fs::path snap = dir_ / kSnapshot;
  if (fs::exists(snap)) {
    const json j = json::parse(io::read_file(snap));
    snapshot_seq = j.at("seq").get<std::uint64_t>();
    for (const auto& t : j.at("tasks")) apply_task(task_from(t));
    seq_ = snapshot_seq;
    next_task_id_ = std::max(next_task_id_, j.value("next_task_id", std::uint64_t{1}));
  }

  const fs::path journal = dir_ / kJournal;
  if (!fs::exists(journal)) return;
  const std::string data = io::read_file(journal);
  std::size_t pos = 0;
  std::size_t good_end = 0;
  std::size_t records = 0;
  while (pos < data.size()) {
    const auto nl = data.find('\n', pos);
    if (nl == std::string::npos) break;  // torn final write
    const std::string_view line(data.data() + pos, nl - pos);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error&) {
      if (data.find('\n', nl + 1) == std::string::npos) break;  // torn tail
      throw DataError("corrupt journal record at byte " + std::to_string(pos) + " in " + journal.string());
    }
    const auto seq = rec.at("seq").get<std::uint64_t>();
    if (seq > snapshot_seq) {
      if (seq != seq_ + 1) {
        throw DataError("journal sequence gap: expected " + std::to_string(seq_ + 1) + ", found " +
                        std::to_string(seq));
      }
      const std::string type = rec.at("type").get<std::string>();
      if (type == "task") {
        apply_task(task_from(rec));
      } else if (type == "verdict") {
        apply_verdict(rec.at("task_id").get<std::uint64_t>(),
                      {rec.at("annotator").get<std::string>(), rec.at("accept").get<std::vector<bool>>(),
                       rec.value("ts", std::int64_t{0})});
      } else {
        throw DataError("unknown journal record type " + type);
      }
      seq_ = seq;
      ++records;
    }
    pos = nl + 1;
    good_end = pos;
  }
  if (good_end < data.size()) {
    spdlog::warn("discarding {} bytes of incomplete journal tail", data.size() - good_end);
    fs::resize_file(journal, good_end);
  }
  since_snapshot_ = records;
}

void TaskStore::append(std::string record) {
  if (journal_fd_ < 0) return;
  record.push_back('\n');
  std::size_t off = 0;
  while (off < record.size()) {
    const auto n = ::write(journal_fd_, record.data() + off, record.size() - off);
    if (n < 0) throw DataError("journal write failed in " + dir_.string());
    off += static_cast<std::size_t>(n);
  }
  if (opts_.fsync) ::fsync(journal_fd_);
}

void TaskStore::apply_task(VerificationTask t) {
  t.state = t.verdicts.size() >= opts_.quorum ? TaskState::complete : TaskState::open;
  next_task_id_ = std::max(next_task_id_, t.task_id + 1);
  by_image_[t.image_id] = t.task_id;
  tasks_[t.task_id] = std::move(t);
}

void TaskStore::apply_verdict(std::uint64_t task_id, Verdict v) {
  auto it = tasks_.find(task_id);
  if (it == tasks_.end()) throw DataError("journal verdict for unknown task " + std::to_string(task_id));
  it->second.verdicts.push_back(std::move(v));
  if (it->second.verdicts.size() >= opts_.quorum) it->second.state = TaskState::complete;
}

void TaskStore::write_snapshot_locked() {
  if (dir_.empty()) return;
  json tasks = json::array();
  for (const auto& [id, t] : tasks_) tasks.push_back(task_json(t));
  const json snap{{"seq", seq_}, {"next_task_id", next_task_id_}, {"tasks", std::move(tasks)}};
  io::write_file_atomic(dir_ / kSnapshot, snap.dump());
  since_snapshot_ = 0;
}

void TaskStore::snapshot() {
  std::unique_lock lock(mutex_);
  write_snapshot_locked();
}

ImportResult TaskStore::create_tasks(std::span<const Candidate> candidates,
                                     const std::function<bool(const Candidate&)>& image_known) {
  // Group boxes by image, keeping first-appearance order.
  std::vector<VerificationTask> fresh;
  std::map<std::string, std::size_t, std::less<>> pos;
  ImportResult res;

  std::unique_lock lock(mutex_);
  for (const auto& c : candidates) {
    if (image_known && !image_known(c)) {
      spdlog::warn("rejecting candidate for unknown image {}", c.image_id);
      ++res.rejected;
      continue;
    }
    if (by_image_.contains(c.image_id)) {
      ++res.existing;
      continue;
    }
    auto [it, inserted] = pos.try_emplace(c.image_id, fresh.size());
    if (inserted) {
      VerificationTask t;
      t.image_id = c.image_id;
      t.city = c.city;
      t.image_path = c.image_path;
      fresh.push_back(std::move(t));
    }
    fresh[it->second].boxes.push_back(c.box);
  }

  for (auto& t : fresh) {
    t.task_id = next_task_id_;
    json rec = task_json(t);
    rec.erase("verdicts");
    rec["seq"] = seq_ + 1;
    rec["type"] = "task";
    append(rec.dump());
    ++seq_;
    ++since_snapshot_;
    apply_task(std::move(t));
    ++res.created;
  }
  if (opts_.snapshot_every && since_snapshot_ >= opts_.snapshot_every) write_snapshot_locked();
  return res;
}

std::optional<VerificationTask> TaskStore::next_task(const std::string& annotator) const {
  if (annotator.empty()) throw ValidationError("annotator id is required");
  std::shared_lock lock(mutex_);
  const VerificationTask* best = nullptr;
  for (const auto& [id, t] : tasks_) {
    if (t.state != TaskState::open || t.judged_by(annotator)) continue;
    if (!best || t.verdicts.size() < best->verdicts.size()) best = &t;
  }
  if (!best) return std::nullopt;
  VerificationTask copy = *best;
  copy.verdicts.clear();
  return copy;
}

TaskState TaskStore::submit_verdict(std::uint64_t task_id, const std::string& annotator,
                                    const std::vector<bool>& decisions) {
  if (annotator.empty()) throw ValidationError("annotator id is required");
  std::unique_lock lock(mutex_);
  auto it = tasks_.find(task_id);
  if (it == tasks_.end()) throw NotFound("no task " + std::to_string(task_id));
  const VerificationTask& t = it->second;
  if (t.judged_by(annotator)) {
    throw Conflict("annotator " + annotator + " already judged task " + std::to_string(task_id));
  }
  if (t.state == TaskState::complete) throw Conflict("task " + std::to_string(task_id) + " is complete");
  if (decisions.size() != t.boxes.size()) {
    throw ValidationError("task " + std::to_string(task_id) + " has " + std::to_string(t.boxes.size()) +
                          " boxes but " + std::to_string(decisions.size()) + " decisions were given");
  }
  Verdict v{annotator, decisions, opts_.clock()};
  const json rec{{"seq", seq_ + 1}, {"type", "verdict"}, {"task_id", task_id},
                 {"annotator", v.annotator}, {"accept", v.accept}, {"ts", v.timestamp_ms}};
  append(rec.dump());
  ++seq_;
  ++since_snapshot_;
  apply_verdict(task_id, std::move(v));
  const TaskState state = it->second.state;
  if (opts_.snapshot_every && since_snapshot_ >= opts_.snapshot_every) write_snapshot_locked();
  return state;
}

std::optional<VerificationTask> TaskStore::task(std::uint64_t task_id) const {
  std::shared_lock lock(mutex_);
  auto it = tasks_.find(task_id);
  if (it == tasks_.end()) return std::nullopt;
  return it->second;
}

std::optional<VerificationTask> TaskStore::task_for_image(const std::string& image_id) const {
  std::shared_lock lock(mutex_);
  auto it = by_image_.find(image_id);
  if (it == by_image_.end()) return std::nullopt;
  return tasks_.at(it->second);
}

std::vector<VerificationTask> TaskStore::tasks() const {
  std::shared_lock lock(mutex_);
  std::vector<VerificationTask> out;
  for (const auto& [id, t] : tasks_) out.push_back(t);
  return out;
}

Progress TaskStore::progress() const {
  std::shared_lock lock(mutex_);
  Progress p;
  p.quorum = opts_.quorum;
  p.tasks = tasks_.size();
  for (const auto& [id, t] : tasks_) {
    p.complete += t.state == TaskState::complete;
    p.verdicts += t.verdicts.size();
  }
  return p;
}

ExportResult TaskStore::export_verified() const {
  std::shared_lock lock(mutex_);
  ExportResult r;
  r.quorum = opts_.quorum;
  r.majority = majority();
  for (const auto& [id, t] : tasks_) {
    if (t.state != TaskState::complete) {
      r.incomplete_tasks.push_back(id);
      continue;
    }
    bool any = false;
    for (std::size_t b = 0; b < t.boxes.size(); ++b) {
      VerifiedDetection d;
      d.image_id = t.image_id;
      d.city = t.city;
      d.box_index = b;
      d.box = t.boxes[b];
      d.verdicts = t.verdicts.size();
      for (const auto& v : t.verdicts) d.accepts += v.accept[b] ? 1 : 0;
      d.verified = d.accepts >= r.majority;
      if (d.verified) {
        ++r.verified_per_city[t.city];
        any = true;
      } else {
        r.verified_per_city.try_emplace(t.city, 0);
      }
      r.detections.push_back(std::move(d));
    }
    if (any) ++r.positive_images_per_city[t.city];
  }
  return r;
}

std::uint64_t TaskStore::last_seq() const {
  std::shared_lock lock(mutex_);
  return seq_;
}

std::string TaskStore::state_digest() const {
  std::shared_lock lock(mutex_);
  json tasks = json::array();
  for (const auto& [id, t] : tasks_) {
    json j = task_json(t);
    j["state"] = t.state == TaskState::complete ? "complete" : "open";
    tasks.push_back(std::move(j));
  }
  return json{{"seq", seq_}, {"tasks", std::move(tasks)}}.dump();
}

std::string to_json(const VerifiedDetection& d) {
  return json{{"image_id", d.image_id}, {"city", d.city},         {"box_index", d.box_index},
              {"box", box_json(d.box)}, {"accepts", d.accepts},   {"verdicts", d.verdicts},
              {"verified", d.verified}, {"resolution", "majority"}}
      .dump();
}

VerifiedDetection verified_from_json(std::string_view line) {
  const json j = json::parse(line);
  VerifiedDetection d;
  d.image_id = j.at("image_id").get<std::string>();
  d.city = j.value("city", "");
  d.box_index = j.value("box_index", std::size_t{0});
  d.box = box_from(j.at("box"));
  d.accepts = j.value("accepts", std::size_t{0});
  d.verdicts = j.value("verdicts", std::size_t{0});
  d.verified = j.at("verified").get<bool>();
  return d;
}

void write_verified(const ExportResult& r, const fs::path& file) {
  io::AtomicWriter out(file);
  for (const auto& d : r.detections) out.stream() << to_json(d) << '\n';
  out.commit();
}

std::vector<VerifiedDetection> read_verified(const fs::path& file) {
  std::vector<VerifiedDetection> out;
  io::for_each_line(file, [&](std::string_view line, std::size_t n) {
    try {
      out.push_back(verified_from_json(line));
    } catch (const std::exception& e) {
      throw DataError(file.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  });
  return out;
}

std::map<std::string, std::size_t> count_verified(std::span<const VerifiedDetection> dets) {
  std::map<std::string, std::size_t> out;
  for (const auto& d : dets) {
    auto& n = out[d.city];
    if (d.verified) ++n;
  }
  return out;
}

std::vector<Candidate> candidates_from(std::span<const detect::DetectionInstance> dets, const std::string& city,
                                       const std::function<std::string(const std::string&)>& image_path) {
  std::vector<Candidate> out;
  out.reserve(dets.size());
  for (const auto& d : dets) {
    out.push_back({d.image_id, city, d.bbox, image_path ? image_path(d.image_id) : std::string{}});
  }
  return out;
}

}  // namespace streetcam::verify
