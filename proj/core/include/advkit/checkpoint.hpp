#pragma once

#include <filesystem>
#include <string>

#include "advkit/model.hpp"

namespace advkit {

/// Serialised model: magic "GSTM1\n", a one-line JSON header (architecture,
/// class names, normalisation, tensor manifest), then little-endian float32
/// parameters. Round trips are bit-exact.
std::string encode_checkpoint(const Model& model);
/// Throws bad_magic, version_mismatch, corrupt_header or truncated; never
/// returns a partially populated model.
Model decode_checkpoint(std::string_view bytes, const std::string& source = "checkpoint");

/// Atomic write (temporary file + rename).
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace advkit
