#include "cmxqe/error.hpp"

namespace cmxqe {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnreadableFile: return "UnreadableFile";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::EmptySentence: return "EmptySentence";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::DuplicateKey: return "DuplicateKey";
    case ErrorKind::MissingKey: return "MissingKey";
    case ErrorKind::NoHumanVectors: return "NoHumanVectors";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::StaleCache: return "StaleCache";
    case ErrorKind::ArchitectureMismatch: return "ArchitectureMismatch";
    case ErrorKind::DegenerateDistribution: return "DegenerateDistribution";
    case ErrorKind::TaskMismatch: return "TaskMismatch";
  }
  return "Unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::NonFiniteInput:
    case ErrorKind::DegenerateDistribution:
      return kExitNumerical;
    default:
      return kExitInput;
  }
}

}  // namespace cmxqe
