#pragma once

#include <stdexcept>
#include <string>

namespace sfpp {

// Categories map one-to-one onto CLI exit codes.
enum class ErrorCategory {
  kShape,
  kNumeric,
  kConfig,
  kIo,
  kFormat,
  kDiverged,
  kInvalidArgument,
};

inline const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kShape: return "shape";
    case ErrorCategory::kNumeric: return "numeric";
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kFormat: return "format";
    case ErrorCategory::kDiverged: return "diverged";
    case ErrorCategory::kInvalidArgument: return "invalid_argument";
  }
  return "unknown";
}

// Process exit code for an error of this category. 0 is success and 1 is
// reserved for a failed check (gradcheck) or an unexpected exception.
inline int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kConfig: return 2;
    case ErrorCategory::kIo: return 3;
    case ErrorCategory::kFormat: return 4;
    case ErrorCategory::kDiverged: return 5;
    case ErrorCategory::kNumeric: return 6;
    case ErrorCategory::kShape: return 7;
    case ErrorCategory::kInvalidArgument: return 8;
  }
  return 1;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorCategory::kShape, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorCategory::kNumeric, w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorCategory::kConfig, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorCategory::kIo, w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error(ErrorCategory::kFormat, w) {}
};
struct DivergedError : Error {
  explicit DivergedError(const std::string& w) : Error(ErrorCategory::kDiverged, w) {}
};
struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& w) : Error(ErrorCategory::kInvalidArgument, w) {}
};

}  // namespace sfpp
