#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace advkit {

enum class Errc {
  shape_mismatch,
  invalid_argument,
  out_of_range,
  stale_context,
  non_finite,
  io_failure,
  bad_magic,
  corrupt_header,
  truncated,
  version_mismatch,
  dimension_mismatch,
  unknown_format,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure raised by the toolkit. `code()` is stable and testable;
/// `what()` carries a human-readable message naming the offending values.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& message);

}  // namespace advkit
