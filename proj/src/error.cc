#include "ctxgnn/error.h"

namespace ctxgnn {

const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUnknownType: return "UnknownType";
    case ErrorKind::kDanglingEdge: return "DanglingEdge";
    case ErrorKind::kBadTimestamp: return "BadTimestamp";
    case ErrorKind::kBadTable: return "BadTable";
    case ErrorKind::kInvalidSeed: return "InvalidSeed";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::kTargetOutOfRange: return "TargetOutOfRange";
    case ErrorKind::kTargetMasked: return "TargetMasked";
    case ErrorKind::kMissingEncoder: return "MissingEncoder";
    case ErrorKind::kDepthMismatch: return "DepthMismatch";
    case ErrorKind::kUnknownItem: return "UnknownItem";
    case ErrorKind::kClassBudgetTooSmall: return "ClassBudgetTooSmall";
    case ErrorKind::kEmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorKind::kBadMagic: return "BadMagic";
    case ErrorKind::kVersionMismatch: return "VersionMismatch";
    case ErrorKind::kTruncatedFile: return "TruncatedFile";
    case ErrorKind::kInvalidUser: return "InvalidUser";
    case ErrorKind::kEmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorKind::kNoEligibleUsers: return "NoEligibleUsers";
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kIo: return "Io";
  }
  return "Unknown";
}

}  // namespace ctxgnn
