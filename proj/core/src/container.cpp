#include "container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "advkit/error.hpp"

namespace advkit::detail {

using nlohmann::json;

std::string encode_container(std::string_view tag, json header,
                             const std::vector<NamedTensor>& tensors) {
  json manifest = json::array();
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    const std::size_t bytes = t.value.numel() * 4;
    json dims = json::array();
    for (std::size_t d : t.value.shape().dims()) dims.push_back(d);
    manifest.push_back({{"name", t.name}, {"shape", dims}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  header["version"] = kContainerVersion;
  header["tensors"] = std::move(manifest);
  header["blob_bytes"] = offset;

  std::string out(tag);
  out += std::to_string(kContainerVersion);
  out += '\n';
  out += header.dump();
  out += '\n';
  out.reserve(out.size() + offset);
  for (const auto& t : tensors)
    for (float v : t.value.data()) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int s = 0; s < 32; s += 8) out.push_back(static_cast<char>((bits >> s) & 0xff));
    }
  return out;
}

DecodedContainer decode_container(std::string_view bytes, std::string_view tag,
                                  const std::string& what) {
  const std::size_t magic_len = tag.size() + 2;
  if (bytes.size() < magic_len)
    fail(Errc::truncated, what + ": " + std::to_string(bytes.size()) + " bytes, shorter than magic");
  if (bytes.substr(0, tag.size()) != tag || bytes[magic_len - 1] != '\n')
    fail(Errc::bad_magic, what + ": expected magic \"" + std::string(tag) + "1\\n\"");
  const char version = bytes[tag.size()];
  if (version != '0' + kContainerVersion)
    fail(Errc::version_mismatch, what + ": container version '" + std::string(1, version) +
                                     "', this build reads version " +
                                     std::to_string(kContainerVersion));

  const std::size_t eol = bytes.find('\n', magic_len);
  if (eol == std::string_view::npos) fail(Errc::truncated, what + ": header line not terminated");
  DecodedContainer out;
  try {
    out.header = json::parse(bytes.substr(magic_len, eol - magic_len));
  } catch (const json::exception& e) {
    fail(Errc::corrupt_header, what + ": header is not valid JSON (" + e.what() + ")");
  }
  if (header_field<int>(out.header, "version", what) != kContainerVersion)
    fail(Errc::version_mismatch, what + ": header version " + out.header["version"].dump());

  const auto blob_bytes = header_field<std::size_t>(out.header, "blob_bytes", what);
  const std::string_view blob = bytes.substr(eol + 1);
  if (blob.size() < blob_bytes)
    fail(Errc::truncated, what + ": blob has " + std::to_string(blob.size()) + " of " +
                              std::to_string(blob_bytes) + " bytes");
  if (blob.size() > blob_bytes)
    fail(Errc::corrupt_header, what + ": " + std::to_string(blob.size() - blob_bytes) +
                                   " bytes after the blob");

  if (!out.header.contains("tensors") || !out.header["tensors"].is_array())
    fail(Errc::corrupt_header, what + ": header lacks a tensor manifest");
  std::size_t expected_offset = 0;
  for (const json& entry : out.header["tensors"]) {
    const auto name = header_field<std::string>(entry, "name", what);
    const auto offset = header_field<std::size_t>(entry, "offset", what);
    const auto size = header_field<std::size_t>(entry, "bytes", what);
    std::vector<std::size_t> dims;
    try {
      dims = entry.at("shape").get<std::vector<std::size_t>>();
    } catch (const json::exception&) {
      fail(Errc::corrupt_header, what + ": tensor \"" + name + "\" has no valid shape");
    }
    Shape shape;
    try {
      shape = Shape(std::span<const std::size_t>(dims));
    } catch (const Error&) {
      fail(Errc::corrupt_header, what + ": tensor \"" + name + "\" has an invalid shape");
    }
    if (offset != expected_offset || size != shape.numel() * 4 || offset + size > blob_bytes)
      fail(Errc::corrupt_header, what + ": tensor \"" + name + "\" has inconsistent extent");
    expected_offset += size;
    std::vector<float> values(shape.numel());
    const auto* p = reinterpret_cast<const unsigned char*>(blob.data() + offset);
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= std::uint32_t{p[4 * i + b]} << (8 * b);
      values[i] = std::bit_cast<float>(bits);
    }
    try {
      out.tensors.push_back({name, Tensor(shape, std::move(values))});
    } catch (const Error& e) {
      fail(Errc::corrupt_header, what + ": tensor \"" + name + "\": " + e.what());
    }
  }
  if (expected_offset != blob_bytes)
    fail(Errc::corrupt_header, what + ": manifest covers " + std::to_string(expected_offset) +
                                   " of " + std::to_string(blob_bytes) + " blob bytes");
  return out;
}

}  // namespace advkit::detail
