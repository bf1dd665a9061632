#include "ggeur/error.hpp"

namespace ggeur {

const char* to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::kIo: return "io";
    case FormatErrorKind::kBadMagic: return "bad-magic";
    case FormatErrorKind::kBadVersion: return "bad-version";
    case FormatErrorKind::kBadDtype: return "bad-dtype";
    case FormatErrorKind::kTruncated: return "truncated";
    case FormatErrorKind::kDimensionOverflow: return "dimension-overflow";
    case FormatErrorKind::kTrailingBytes: return "trailing-bytes";
  }
  return "unknown";
}

FormatError::FormatError(FormatErrorKind kind, std::uint64_t offset, const std::string& what)
    : DataError(std::string(to_string(kind)) + " at byte " + std::to_string(offset) + ": " + what),
      kind_(kind),
      offset_(offset) {}

}  // namespace ggeur
