// SPDX-License-Identifier: Apache-2.0
#include "mkv/checked_io.h"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <sstream>

namespace mkv {

namespace {
constexpr std::string_view kTrailer = "# fnv1a64=";
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::string seal(const std::string& body) {
  std::string out = body;
  if (!out.empty() && out.back() != '\n') out.push_back('\n');
  out += std::string(kTrailer) + hex64(fnv1a64(out)) + "\n";
  return out;
}

std::string unseal(const std::string& text, const std::string& origin) {
  if (text.empty() || text.back() != '\n') throw PersistenceError(origin + ": truncated (no final newline)");
  const auto last_start = text.rfind('\n', text.size() - 2);
  const std::size_t begin = last_start == std::string::npos ? 0 : last_start + 1;
  const std::string_view last(text.data() + begin, text.size() - begin - 1);
  if (last.substr(0, kTrailer.size()) != kTrailer)
    throw PersistenceError(origin + ": truncated (checksum trailer missing)");
  const std::string body = text.substr(0, begin);
  const std::string expected(last.substr(kTrailer.size()));
  if (hex64(fnv1a64(body)) != expected)
    throw PersistenceError(origin + ": checksum mismatch (file corrupted)");
  return body;
}

void write_checked(const std::filesystem::path& path, const std::string& body) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PersistenceError("cannot open " + path.string() + " for writing");
  out << seal(body);
  if (!out) throw PersistenceError("write failed for " + path.string());
}

std::string read_checked(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PersistenceError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return unseal(ss.str(), path.string());
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw PersistenceError("malformed number '" + std::string(s) + "'");
  return v;
}

std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw PersistenceError("malformed integer '" + std::string(s) + "'");
  return v;
}

std::string exact(double v) { return fmt::format("{}", v); }

}  // namespace mkv
