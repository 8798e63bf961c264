#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hiermil {

// Bad user-supplied configuration or arguments. CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem failures. CLI exit code 3.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent data (datasets, hierarchies, models).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t state = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= 0x100000001b3ull;
  }
  return state;
}

std::string hex_digest(std::uint64_t value);

// Digest of a byte string, rendered as 16 hex chars.
inline std::string content_digest(std::string_view bytes) {
  return hex_digest(fnv1a64(bytes));
}

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames into place, so readers never
// observe a partial file.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view content);

std::string format_double(double v);  // round-trip exact, "%.17g"

}  // namespace hiermil
