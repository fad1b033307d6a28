// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mkv {

class PersistenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// Text artifacts carry a trailing "# fnv1a64=<hex>" line over everything
// before it. A missing trailer means the file was truncated.
void write_checked(const std::filesystem::path& path, const std::string& body);
std::string read_checked(const std::filesystem::path& path);
std::string seal(const std::string& body);
std::string unseal(const std::string& text, const std::string& origin);

std::vector<std::string_view> split(std::string_view s, char sep);
double parse_double(std::string_view s);
std::uint64_t parse_u64(std::string_view s);
// Shortest representation that parses back to the same double.
std::string exact(double v);

}  // namespace mkv
