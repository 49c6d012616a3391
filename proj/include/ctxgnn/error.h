#pragma once

#include <stdexcept>
#include <string>

namespace ctxgnn {

enum class ErrorKind {
  kUnknownType,
  kDanglingEdge,
  kBadTimestamp,
  kBadTable,
  kInvalidSeed,
  kShapeMismatch,
  kIndexOutOfRange,
  kTargetOutOfRange,
  kTargetMasked,
  kMissingEncoder,
  kDepthMismatch,
  kUnknownItem,
  kClassBudgetTooSmall,
  kEmptyTrainingSet,
  kBadMagic,
  kVersionMismatch,
  kTruncatedFile,
  kInvalidUser,
  kEmptyGroundTruth,
  kNoEligibleUsers,
  kInvalidConfig,
  kIo,
};

const char* ErrorKindName(ErrorKind kind);

// Every failure raised by the library carries one of the kinds above so
// callers (tests, CLI exit codes) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ctxgnn
