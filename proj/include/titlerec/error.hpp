#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace titlerec {

enum class ErrorCode {
  // corpus
  MissingColumn,
  MalformedRow,
  DuplicateArticleId,
  UnparsableDate,
  UnknownColumn,
  // tokenizer
  EmptyCorpus,
  IdOutOfRange,
  // encoder
  InvalidConfig,
  ShapeMismatch,
  PositionOutOfRange,
  NoRecordedForward,
  ConfigMismatch,
  // objectives
  NothingToMask,
  InventoryTooSmall,
  EmptyPlan,
  UnknownArticle,
  EmptyBatch,
  NonFiniteComponent,
  // index
  DegenerateEmbedding,
  KTooLarge,
  InsufficientCandidates,
  // eval
  EmptyTruth,
  DuplicatePrediction,
  NoScorableCustomers,
  DuplicateCustomer,
  InvalidRow,
  FormatViolation,
  UnknownCustomer,
  // pipeline / io
  MissingArtifact,
  IoError,
  CorruptFile,
  WorkdirLocked,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every module reports failures through this type; code() identifies the
// contract that was violated, what() carries the human-readable context.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace titlerec
