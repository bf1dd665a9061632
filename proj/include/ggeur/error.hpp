#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ggeur {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad flags, malformed configuration, violated preconditions on parameters.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Input data that cannot be used: non-finite values, inconsistent
// dimensions, labels out of range, corrupt files.
class DataError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrorKind {
  kIo,
  kBadMagic,
  kBadVersion,
  kBadDtype,
  kTruncated,
  kDimensionOverflow,
  kTrailingBytes,
};

const char* to_string(FormatErrorKind kind);

// Binary container decoding failure. `offset` is the byte position at which
// the problem was detected.
class FormatError : public DataError {
 public:
  FormatError(FormatErrorKind kind, std::uint64_t offset, const std::string& what);

  FormatErrorKind kind() const noexcept { return kind_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  FormatErrorKind kind_;
  std::uint64_t offset_;
};

}  // namespace ggeur
