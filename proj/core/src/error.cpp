#include "advkit/error.hpp"

namespace advkit {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::out_of_range: return "out_of_range";
    case Errc::stale_context: return "stale_context";
    case Errc::non_finite: return "non_finite";
    case Errc::io_failure: return "io_failure";
    case Errc::bad_magic: return "bad_magic";
    case Errc::corrupt_header: return "corrupt_header";
    case Errc::truncated: return "truncated";
    case Errc::version_mismatch: return "version_mismatch";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::unknown_format: return "unknown_format";
  }
  return "unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(Errc code, const std::string& message) { throw Error(code, message); }

}  // namespace advkit
