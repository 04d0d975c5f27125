#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <string_view>

namespace streetcam::io {

/// Writes to "<path>.tmp.<pid>" and renames over the target on commit(), so
/// readers never observe a half-written file. Uncommitted output is removed.
class AtomicWriter {
 public:
  explicit AtomicWriter(std::filesystem::path target, bool binary = false);
  ~AtomicWriter();
  AtomicWriter(const AtomicWriter&) = delete;
  AtomicWriter& operator=(const AtomicWriter&) = delete;

  std::ofstream& stream() { return out_; }
  void commit();

 private:
  std::filesystem::path target_;
  std::filesystem::path tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

std::string read_file(const std::filesystem::path& file);
void write_file_atomic(const std::filesystem::path& file, std::string_view data);

/// Calls fn(line, 1-based line number) for each non-empty line.
void for_each_line(const std::filesystem::path& file,
                   const std::function<void(std::string_view, std::size_t)>& fn);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& file);

}  // namespace streetcam::io
