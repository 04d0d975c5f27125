#include "streetcam/io.hpp"

#include <unistd.h>

#include <array>
#include <atomic>
#include <sstream>

#include <openssl/evp.h>

#include "streetcam/error.hpp"

namespace streetcam::io {

namespace fs = std::filesystem;

namespace {

std::atomic<unsigned> tmp_counter{0};

std::string hex(const unsigned char* data, std::size_t n) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(2 * n, '0');
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = digits[data[i] >> 4];
    out[2 * i + 1] = digits[data[i] & 0xF];
  }
  return out;
}

}  // namespace

AtomicWriter::AtomicWriter(fs::path target, bool binary)
    : target_(std::move(target)),
      tmp_(target_.string() + ".tmp." + std::to_string(::getpid()) + "." +
           std::to_string(tmp_counter++)) {
  if (target_.has_parent_path()) fs::create_directories(target_.parent_path());
  out_.open(tmp_, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out_) throw DataError("cannot write " + target_.string());
}

AtomicWriter::~AtomicWriter() {
  if (!committed_) {
    out_.close();
    std::error_code ec;
    fs::remove(tmp_, ec);
  }
}

void AtomicWriter::commit() {
  out_.flush();
  if (!out_) throw DataError("write failed: " + target_.string());
  out_.close();
  fs::rename(tmp_, target_);
  committed_ = true;
}

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& file, std::string_view data) {
  AtomicWriter w(file, true);
  w.stream().write(data.data(), static_cast<std::streamsize>(data.size()));
  w.commit();
}

void for_each_line(const fs::path& file,
                   const std::function<void(std::string_view, std::size_t)>& fn) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fn(line, n);
  }
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr);
  return hex(md.data(), len);
}

std::string sha256_file(const fs::path& file) { return sha256_hex(read_file(file)); }

}  // namespace streetcam::io
