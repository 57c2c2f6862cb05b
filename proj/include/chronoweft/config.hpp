#pragma once

// Human-readable key-value configuration:
//
//   # comment
//   profile = desk
//   sweep.sparsity = 0.5, 0.8
//
// Keys are unique; the canonical form (keys sorted, one "key = value" per
// line) is what gets hashed into every CSV row.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "chronoweft/error.hpp"
#include "chronoweft/io.hpp"
#include "chronoweft/random.hpp"

namespace chronoweft {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Shortest round-trip text for a double.
[[nodiscard]] inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  [[nodiscard]] static KeyValueConfig parse(std::string_view text, std::string_view origin = "<config>") {
    KeyValueConfig c;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto nl = text.find('\n', pos);
      std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      const std::string where = std::string(origin) + ":" + std::to_string(line_no);
      if (eq == std::string_view::npos) throw ValidationError(where + ": expected 'key = value'");
      const std::string key(detail::trim(line.substr(0, eq)));
      if (key.empty()) throw ValidationError(where + ": empty key");
      if (c.values_.count(key)) throw ValidationError(where + ": duplicate key '" + key + "'");
      c.values_[key] = std::string(detail::trim(line.substr(eq + 1)));
    }
    return c;
  }

  [[nodiscard]] static KeyValueConfig load(const std::filesystem::path& path) {
    return parse(io::read_file(path), path.string());
  }

  [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) > 0; }

  [[nodiscard]] const std::string& raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError("config: missing key '" + key + "'");
    return it->second;
  }

  [[nodiscard]] std::string get(const std::string& key, const std::string& fallback) const {
    return has(key) ? raw(key) : fallback;
  }

  [[nodiscard]] double number(const std::string& key) const {
    const std::string& v = raw(key);
    double out = 0.0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
      throw ValidationError("config: '" + key + "' is not a number: '" + v + "'");
    }
    return out;
  }
  [[nodiscard]] double number(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }

  [[nodiscard]] std::uint64_t integer(const std::string& key) const {
    const std::string& v = raw(key);
    std::uint64_t out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
      throw ValidationError("config: '" + key + "' is not a non-negative integer: '" + v + "'");
    }
    return out;
  }
  [[nodiscard]] std::uint64_t integer(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? integer(key) : fallback;
  }

  [[nodiscard]] bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string& v = raw(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("config: '" + key + "' is not a boolean: '" + v + "'");
  }

  /// Comma-separated list, items trimmed; empty value gives an empty list.
  [[nodiscard]] std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    if (!has(key)) return out;
    std::string_view v = raw(key);
    while (!v.empty()) {
      const auto comma = v.find(',');
      const auto item = detail::trim(v.substr(0, comma));
      if (!item.empty()) out.emplace_back(item);
      if (comma == std::string_view::npos) break;
      v = v.substr(comma + 1);
    }
    return out;
  }

  [[nodiscard]] std::vector<double> numbers(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : list(key)) {
      double d = 0.0;
      const auto r = std::from_chars(item.data(), item.data() + item.size(), d);
      if (r.ec != std::errc() || r.ptr != item.data() + item.size()) {
        throw ValidationError("config: '" + key + "' has a non-numeric item '" + item + "'");
      }
      out.push_back(d);
    }
    return out;
  }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  void set(const std::string& key, double value) { values_[key] = format_double(value); }
  void set(const std::string& key, std::uint64_t value) { values_[key] = std::to_string(value); }
  void set(const std::string& key, bool value) { values_[key] = value ? "true" : "false"; }

  /// Entries whose key starts with `prefix`, prefix stripped.
  [[nodiscard]] std::map<std::string, std::string> section(const std::string& prefix) const {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : values_) {
      if (k.size() > prefix.size() && k.compare(0, prefix.size(), prefix) == 0) out[k.substr(prefix.size())] = v;
    }
    return out;
  }

  [[nodiscard]] const std::map<std::string, std::string>& entries() const noexcept { return values_; }

  [[nodiscard]] std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  /// 16 hex digits of FNV-1a over the canonical text.
  [[nodiscard]] std::string hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical())));
    return buf;
  }

  friend bool operator==(const KeyValueConfig&, const KeyValueConfig&) = default;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace chronoweft
