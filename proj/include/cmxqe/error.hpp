#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cmxqe {

enum class ErrorKind {
  UnreadableFile,
  IoError,
  MalformedRow,
  MalformedLine,
  InvalidArgument,
  OutOfRange,
  EmptyInput,
  EmptyDataset,
  EmptySentence,
  BadMagic,
  VersionMismatch,
  DimMismatch,
  ShapeMismatch,
  LengthMismatch,
  LabelOutOfRange,
  TruncatedFile,
  DuplicateKey,
  MissingKey,
  NoHumanVectors,
  NonFiniteInput,
  NonFiniteLoss,
  StaleCache,
  ArchitectureMismatch,
  DegenerateDistribution,
  TaskMismatch,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Process exit codes shared by every CLI subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFindings = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

int exit_code_for(ErrorKind kind);

}  // namespace cmxqe
