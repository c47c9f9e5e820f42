#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "titlerec/error.hpp"

namespace titlerec {

std::string read_file(const std::filesystem::path& path);

// Writes to "<path>.tmp" and renames over path, so readers never observe a
// partially written artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// Exclusive advisory lock on "<dir>/.lock" for the lifetime of the object.
class WorkdirLock {
 public:
  explicit WorkdirLock(const std::filesystem::path& dir);
  ~WorkdirLock();
  WorkdirLock(const WorkdirLock&) = delete;
  WorkdirLock& operator=(const WorkdirLock&) = delete;

 private:
  int fd_ = -1;
};

// Little-endian binary encoding helpers for checkpoint and index files.
class BinaryWriter {
 public:
  void bytes(const void* src, std::size_t n) {
    const auto* p = static_cast<const char*>(src);
    buffer_.append(p, n);
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::string& buffer() const { return buffer_; }

 private:
  std::string buffer_;
};

class BinaryReader {
 public:
  BinaryReader(std::string data, std::string source)
      : data_(std::move(data)), source_(std::move(source)) {}

  void bytes(void* dst, std::size_t n) {
    if (n > data_.size() - pos_) fail(ErrorCode::CorruptFile, source_ + ": truncated file");
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, sizeof v); return v; }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, sizeof v); return v; }
  double f64() { double v; bytes(&v, sizeof v); return v; }
  std::string str() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }
  const std::string& source() const { return source_; }

 private:
  std::string data_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::vector<std::string_view> split(std::string_view text, char sep);

std::string format_double(double v);

}  // namespace titlerec
