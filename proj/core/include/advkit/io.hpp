#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace advkit {

/// Whole-file read; throws io_failure naming the path.
std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file then renames over `path`, so readers
/// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Lowercase hex SHA-256 of a byte string or file.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace advkit
