#pragma once

#include <filesystem>
#include <string>

namespace sm {

// SHA-256 hex digests for reproducibility records.
std::string sha256_bytes(const void* data, size_t len);
std::string sha256_string(const std::string& s);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace sm
