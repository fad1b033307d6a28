// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "mkv/checked_io.h"
#include "mkv/config.h"

namespace mkv {

ConfigError::ConfigError(std::size_t line, std::size_t column, const std::string& what)
    : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + what),
      line_(line),
      column_(column) {}

namespace {

bool is_ident(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
}

std::size_t skip_ws(const std::string& s, std::size_t i) {
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return i;
}

// Position of the first comment character outside a quoted value.
std::size_t comment_start(const std::string& s) {
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i] == '#' || s[i] == ';') return i;
  return s.size();
}

std::string rtrim(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.pop_back();
  return s;
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  c.text_ = text;
  c.origin_ = origin;
  std::istringstream is(text);
  std::string raw, section;
  std::size_t line_no = 0;
  std::set<std::string> declared;
  c.data_[""];
  c.section_lines_[""] = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const std::string line = rtrim(raw.substr(0, comment_start(raw)));
    std::size_t i = skip_ws(line, 0);
    if (i == line.size()) continue;
    if (line[i] == '[') {
      const std::size_t close = line.find(']', i);
      if (close == std::string::npos) throw ConfigError(line_no, line.size() + 1, "missing ']'");
      std::size_t a = skip_ws(line, i + 1), b = close;
      while (b > a && (line[b - 1] == ' ' || line[b - 1] == '\t')) --b;
      if (a == b) throw ConfigError(line_no, i + 2, "empty section name");
      for (std::size_t k = a; k < b; ++k)
        if (!is_ident(line[k])) throw ConfigError(line_no, k + 1, "bad character in section name");
      if (skip_ws(line, close + 1) != line.size())
        throw ConfigError(line_no, skip_ws(line, close + 1) + 1, "trailing text after section header");
      section = line.substr(a, b - a);
      if (!declared.insert(section).second)
        throw ConfigError(line_no, a + 1, "duplicate section '" + section + "'");
      c.data_[section];
      c.section_lines_[section] = line_no;
      continue;
    }
    const std::size_t key_begin = i;
    while (i < line.size() && is_ident(line[i])) ++i;
    if (i == key_begin) throw ConfigError(line_no, i + 1, "expected a key");
    const std::string key = line.substr(key_begin, i - key_begin);
    i = skip_ws(line, i);
    if (i >= line.size() || line[i] != '=') throw ConfigError(line_no, i + 1, "expected '='");
    i = skip_ws(line, i + 1);
    if (i >= line.size()) throw ConfigError(line_no, i + 1, "missing value for '" + key + "'");
    auto& sec = c.data_[section];
    if (sec.count(key)) throw ConfigError(line_no, key_begin + 1, "duplicate key '" + key + "'");
    sec[key] = Entry{line.substr(i), line_no, i + 1};
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(0, 0, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::uint64_t Config::hash() const { return fnv1a64(text_); }

bool Config::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

const Config::Entry* Config::find(const std::string& section, const std::string& key) const {
  auto s = data_.find(section);
  if (s == data_.end()) return nullptr;
  auto k = s->second.find(key);
  return k == s->second.end() ? nullptr : &k->second;
}

std::vector<std::string> Config::keys(const std::string& section) const {
  std::vector<std::string> out;
  auto s = data_.find(section);
  if (s != data_.end())
    for (const auto& [k, v] : s->second) out.push_back(k);
  return out;
}

std::vector<std::string> Config::sections() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : data_)
    if (!k.empty() || !v.empty()) out.push_back(k);
  return out;
}

std::size_t Config::section_line(const std::string& section) const {
  auto it = section_lines_.find(section);
  return it == section_lines_.end() ? 0 : it->second;
}

std::string Config::str(const std::string& section, const std::string& key, const std::string& fallback) const {
  const Entry* e = find(section, key);
  return e ? e->value : fallback;
}

namespace {

double to_double(const Config::Entry& e, const std::string& key) {
  double v = 0.0;
  const char* b = e.value.data();
  const char* end = b + e.value.size();
  auto [p, ec] = std::from_chars(b, end, v);
  if (ec != std::errc() || p != end || !std::isfinite(v))
    throw ConfigError(e.line, e.column + (p - b), "'" + key + "' expects a finite number");
  return v;
}

}  // namespace

double Config::num(const std::string& section, const std::string& key, double fallback) const {
  const Entry* e = find(section, key);
  return e ? to_double(*e, key) : fallback;
}

std::uint64_t Config::count(const std::string& section, const std::string& key, std::uint64_t fallback) const {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  std::uint64_t v = 0;
  const char* b = e->value.data();
  const char* end = b + e->value.size();
  auto [p, ec] = std::from_chars(b, end, v);
  if (ec != std::errc() || p != end)
    throw ConfigError(e->line, e->column + (p - b), "'" + key + "' expects a non-negative integer");
  return v;
}

bool Config::flag(const std::string& section, const std::string& key, bool fallback) const {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "yes" || e->value == "1") return true;
  if (e->value == "false" || e->value == "no" || e->value == "0") return false;
  throw ConfigError(e->line, e->column, "'" + key + "' expects true or false");
}

std::vector<double> Config::list(const std::string& section, const std::string& key,
                                 std::vector<double> fallback) const {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= e->value.size()) {
    std::size_t comma = e->value.find(',', start);
    if (comma == std::string::npos) comma = e->value.size();
    std::size_t a = start, b = comma;
    while (a < b && e->value[a] == ' ') ++a;
    while (b > a && e->value[b - 1] == ' ') --b;
    Config::Entry part{e->value.substr(a, b - a), e->line, e->column + a};
    if (part.value.empty()) throw ConfigError(e->line, e->column + a, "empty list element in '" + key + "'");
    out.push_back(to_double(part, key));
    start = comma + 1;
  }
  return out;
}

void Config::allow(const std::string& section, const std::vector<std::string>& keys) {
  auto& v = allowed_[section];
  v.insert(v.end(), keys.begin(), keys.end());
}

void Config::check_unused() const {
  for (const auto& [section, entries] : data_) {
    auto a = allowed_.find(section);
    if (a == allowed_.end()) {
      if (section.empty() && entries.empty()) continue;
      const std::size_t line = section.empty() ? entries.begin()->second.line : section_line(section);
      if (section.empty()) throw ConfigError(line, 1, "keys must appear inside a section");
      throw ConfigError(line, 2, "unknown section '" + section + "'");
    }
    for (const auto& [key, e] : entries)
      if (std::find(a->second.begin(), a->second.end(), key) == a->second.end())
        throw ConfigError(e.line, 1, "unknown key '" + key + "' in [" + section + "]");
  }
}

}  // namespace mkv
