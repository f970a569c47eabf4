#pragma once

// Shared binary container for checkpoints and patches:
//   6-byte magic ("GSTM1\n", "GSTP1\n"), one line of JSON header, then a raw
//   little-endian float32 blob. The header's "tensors" array lists
//   {name, shape, offset, bytes} with offsets relative to the blob start.

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "advkit/error.hpp"
#include "advkit/model.hpp"

namespace advkit::detail {

inline constexpr int kContainerVersion = 1;

std::string encode_container(std::string_view tag, nlohmann::json header,
                             const std::vector<NamedTensor>& tensors);

struct DecodedContainer {
  nlohmann::json header;
  std::vector<NamedTensor> tensors;
};

/// `tag` is the four-letter prefix ("GSTM" / "GSTP"); `what` names the
/// source in error messages.
DecodedContainer decode_container(std::string_view bytes, std::string_view tag,
                                  const std::string& what);

/// Typed header access that reports corrupt_header on absence or type errors.
template <typename T>
T header_field(const nlohmann::json& header, const char* key, const std::string& what) {
  if (!header.is_object() || !header.contains(key))
    fail(Errc::corrupt_header, what + ": header lacks \"" + key + "\"");
  try {
    return header.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::corrupt_header, what + ": header field \"" + key + "\": " + e.what());
  }
}

}  // namespace advkit::detail
