#include "titlerec/io.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "binary artifact formats assume a little-endian host");

namespace titlerec {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::DuplicateArticleId: return "DuplicateArticleId";
    case ErrorCode::UnparsableDate: return "UnparsableDate";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::IdOutOfRange: return "IdOutOfRange";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::PositionOutOfRange: return "PositionOutOfRange";
    case ErrorCode::NoRecordedForward: return "NoRecordedForward";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::NothingToMask: return "NothingToMask";
    case ErrorCode::InventoryTooSmall: return "InventoryTooSmall";
    case ErrorCode::EmptyPlan: return "EmptyPlan";
    case ErrorCode::UnknownArticle: return "UnknownArticle";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::NonFiniteComponent: return "NonFiniteComponent";
    case ErrorCode::DegenerateEmbedding: return "DegenerateEmbedding";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::InsufficientCandidates: return "InsufficientCandidates";
    case ErrorCode::EmptyTruth: return "EmptyTruth";
    case ErrorCode::DuplicatePrediction: return "DuplicatePrediction";
    case ErrorCode::NoScorableCustomers: return "NoScorableCustomers";
    case ErrorCode::DuplicateCustomer: return "DuplicateCustomer";
    case ErrorCode::InvalidRow: return "InvalidRow";
    case ErrorCode::FormatViolation: return "FormatViolation";
    case ErrorCode::UnknownCustomer: return "UnknownCustomer";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::WorkdirLocked: return "WorkdirLocked";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) fail(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

WorkdirLock::WorkdirLock(const std::filesystem::path& dir) {
  const auto lock_path = dir / ".lock";
  fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) fail(ErrorCode::IoError, "cannot open lock file " + lock_path.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    fail(ErrorCode::WorkdirLocked, "another process holds " + lock_path.string());
  }
}

WorkdirLock::~WorkdirLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

// Shortest representation that parses back to the same double.
std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace titlerec
