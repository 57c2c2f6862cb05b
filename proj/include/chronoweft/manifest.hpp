#pragma once

// CSV emission and run manifests.  A manifest lists every artifact of a run
// with its SHA-256; it is written after all artifacts, so its presence marks
// a completed run.

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "chronoweft/config.hpp"
#include "chronoweft/error.hpp"
#include "chronoweft/io.hpp"

namespace chronoweft {

inline constexpr std::string_view kToolVersion = "0.1.0";

[[nodiscard]] inline std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw NumericalError("sha256: digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

[[nodiscard]] inline std::string sha256_file(const std::filesystem::path& path) {
  return sha256_hex(io::read_file(path));
}

// ---------------------------------------------------------------------------
// CSV

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  class Row {
   public:
    Row& operator<<(const std::string& s) {
      cells_.push_back(s);
      return *this;
    }
    Row& operator<<(const char* s) { return *this << std::string(s); }
    Row& operator<<(double v) { return *this << format_double(v); }
    Row& operator<<(std::uint64_t v) { return *this << std::to_string(v); }
    Row& operator<<(std::int64_t v) { return *this << std::to_string(v); }
    Row& operator<<(unsigned v) { return *this << std::to_string(v); }
    Row& operator<<(int v) { return *this << std::to_string(v); }
    Row& operator<<(bool v) { return *this << std::string(v ? "1" : "0"); }

   private:
    friend class CsvTable;
    std::vector<std::string> cells_;
  };

  void add(const Row& r) {
    if (r.cells_.size() != header_.size()) {
      throw DimensionError("csv row has " + std::to_string(r.cells_.size()) + " cells, header has " +
                           std::to_string(header_.size()));
    }
    rows_.push_back(r.cells_);
  }

  [[nodiscard]] std::size_t size() const noexcept { return rows_.size(); }
  [[nodiscard]] const std::vector<std::string>& header() const noexcept { return header_; }
  [[nodiscard]] const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }

  [[nodiscard]] std::string str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out.push_back(',');
        out += quote(cells[i]);
      }
      out.push_back('\n');
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
  }

  void write(const std::filesystem::path& path) const { io::write_file_atomic(path, str()); }

 private:
  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q.push_back('"');
      q.push_back(c);
    }
    q.push_back('"');
    return q;
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// ---------------------------------------------------------------------------
// Manifest

struct ArtifactRecord {
  std::string path;  // relative to the manifest's directory
  std::string kind;
  std::string sha256;
};

/// A train/held-out split used by one training run.
struct SplitRecord {
  std::string label;
  std::vector<std::string> pool;
  std::vector<std::string> held_out;
};

struct RunManifest {
  std::string verb;
  std::string config_hash;
  KeyValueConfig config;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  std::vector<SplitRecord> splits;
  std::vector<ArtifactRecord> artifacts;

  /// Hashes `file` and records it relative to `root`.
  void add_artifact(const std::filesystem::path& root, const std::filesystem::path& file, std::string kind) {
    ArtifactRecord a;
    a.path = std::filesystem::relative(file, root).generic_string();
    a.kind = std::move(kind);
    a.sha256 = sha256_file(file);
    artifacts.push_back(std::move(a));
  }

  [[nodiscard]] nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["tool"] = "chronoweft";
    j["version"] = std::string(kToolVersion);
    j["verb"] = verb;
    j["config_hash"] = config_hash;
    j["config"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config.entries()) j["config"][k] = v;
    j["seeds"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : seeds) j["seeds"][k] = v;
    j["splits"] = nlohmann::ordered_json::array();
    for (const auto& s : splits) j["splits"].push_back({{"label", s.label}, {"pool", s.pool}, {"held_out", s.held_out}});
    j["artifacts"] = nlohmann::ordered_json::array();
    for (const auto& a : artifacts) j["artifacts"].push_back({{"path", a.path}, {"kind", a.kind}, {"sha256", a.sha256}});
    return j;
  }

  [[nodiscard]] static RunManifest from_json(const nlohmann::json& j) {
    RunManifest m;
    try {
      m.verb = j.at("verb").get<std::string>();
      m.config_hash = j.at("config_hash").get<std::string>();
      for (const auto& [k, v] : j.at("config").items()) m.config.set(k, v.get<std::string>());
      for (const auto& [k, v] : j.at("seeds").items()) m.seeds.emplace_back(k, v.get<std::uint64_t>());
      for (const auto& s : j.at("splits")) {
        m.splits.push_back({s.at("label").get<std::string>(), s.at("pool").get<std::vector<std::string>>(),
                            s.at("held_out").get<std::vector<std::string>>()});
      }
      for (const auto& a : j.at("artifacts")) {
        m.artifacts.push_back(
            {a.at("path").get<std::string>(), a.at("kind").get<std::string>(), a.at("sha256").get<std::string>()});
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("manifest: ") + e.what());
    }
    return m;
  }

  void write(const std::filesystem::path& path) const { io::write_file_atomic(path, to_json().dump(2) + "\n"); }

  [[nodiscard]] static RunManifest read(const std::filesystem::path& path) {
    try {
      return from_json(nlohmann::json::parse(io::read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
};

/// Every artifact exists and matches its recorded hash.
inline void verify_manifest(const RunManifest& m, const std::filesystem::path& root) {
  for (const auto& a : m.artifacts) {
    const auto p = root / a.path;
    if (!std::filesystem::exists(p)) throw FormatError("manifest artifact missing: " + a.path);
    if (sha256_file(p) != a.sha256) throw FormatError("manifest artifact hash mismatch: " + a.path);
  }
}

/// No split trains on a system it holds out.
inline void audit_manifest(const RunManifest& m) {
  for (const auto& s : m.splits) {
    const std::set<std::string> pool(s.pool.begin(), s.pool.end());
    for (const auto& h : s.held_out) {
      if (pool.count(h)) {
        throw ValidationError("manifest audit: split '" + s.label + "' trains on held-out system '" + h + "'");
      }
    }
  }
}

}  // namespace chronoweft
