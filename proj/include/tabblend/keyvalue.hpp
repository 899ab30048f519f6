#pragma once

// Flat `key = value` text files. Lines starting with '#' are comments; keys may
// repeat (later entries override for scalar lookups, all entries are kept in
// order for list-valued keys such as `column`).

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tabblend/common.hpp"

namespace tabblend {

inline std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

class KeyValueFile {
 public:
  using Entry = std::pair<std::string, std::string>;

  static KeyValueFile parse(std::istream& in, const std::string& origin = "<stream>") {
    KeyValueFile kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto body = trim(line);
      if (body.empty() || body.front() == '#') continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) {
        throw Error(ErrorKind::config, origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      }
      const auto key = trim(body.substr(0, eq));
      if (key.empty()) {
        throw Error(ErrorKind::config, origin + ":" + std::to_string(lineno) + ": empty key");
      }
      kv.entries_.emplace_back(std::string(key), std::string(trim(body.substr(eq + 1))));
    }
    return kv;
  }

  static KeyValueFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
      throw Error(ErrorKind::config, "cannot open config file: " + path);
    }
    return parse(in, path);
  }

  static KeyValueFile from_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  void set(std::string key, std::string value) { entries_.emplace_back(std::move(key), std::move(value)); }

  std::optional<std::string> get(std::string_view key) const {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (it->first == key) return it->second;
    }
    return std::nullopt;
  }

  std::vector<std::string> get_all(std::string_view key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_) {
      if (k == key) out.push_back(v);
    }
    return out;
  }

  std::string get_string(std::string_view key, std::string fallback) const {
    auto v = get(key);
    return v ? *v : std::move(fallback);
  }

  double get_double(std::string_view key, double fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    const auto d = parse_double(*v);
    if (!d) {
      throw Error(ErrorKind::config, "config key '" + std::string(key) + "' is not a number: " + *v);
    }
    return *d;
  }

  long long get_int(std::string_view key, long long fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    const auto s = trim(*v);
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
      throw Error(ErrorKind::config, "config key '" + std::string(key) + "' is not an integer: " + *v);
    }
    return out;
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }

 private:
  std::vector<Entry> entries_;
};

}  // namespace tabblend
