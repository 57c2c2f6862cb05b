#pragma once

// Binary containers: trajectories, sparse observations, named-tensor
// checkpoints.  All integers and reals are little-endian; files are written
// to a sibling temp path and renamed into place.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "chronoweft/error.hpp"
#include "chronoweft/observe.hpp"
#include "chronoweft/tensor.hpp"
#include "chronoweft/types.hpp"

namespace chronoweft::io {

static_assert(std::endian::native == std::endian::little, "containers are written in host order");

inline constexpr char kTrajectoryMagic[4] = {'C', 'W', 'T', 'J'};
inline constexpr char kMaskMagic[4] = {'C', 'W', 'M', 'K'};
inline constexpr char kCheckpointMagic[4] = {'C', 'W', 'C', 'K'};
inline constexpr std::uint32_t kTrajectoryVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

class Writer {
 public:
  template <typename T>
  void put(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void string(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  [[nodiscard]] const std::string& buffer() const noexcept { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string data, std::string origin) : data_(std::move(data)), origin_(std::move(origin)) {}

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    T v;
    need(sizeof(T));
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }
  std::string string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void expect_magic(const char (&magic)[4]) {
    char m[4];
    bytes(m, 4);
    if (std::memcmp(m, magic, 4) != 0) {
      throw FormatError(origin_ + ": bad magic, expected '" + std::string(magic, 4) + "'");
    }
  }
  [[nodiscard]] bool at_end() const noexcept { return pos_ == data_.size(); }
  [[nodiscard]] const std::string& origin() const noexcept { return origin_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError(origin_ + ": truncated file");
  }
  std::string data_;
  std::size_t pos_ = 0;
  std::string origin_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ValidationError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Trajectory / SparseSeries

namespace detail {

inline void put_trajectory(Writer& w, const Matrix& data, double dt, const NormStats& ns) {
  const auto dims = static_cast<std::size_t>(data.cols());
  if (ns.dims() != dims) {
    throw DimensionError("norm_stats have " + std::to_string(ns.dims()) + " dims, data has " +
                         std::to_string(dims));
  }
  w.bytes(kTrajectoryMagic, 4);
  w.put(kTrajectoryVersion);
  w.put(static_cast<std::uint64_t>(data.rows()));
  w.put(static_cast<std::uint32_t>(dims));
  w.put(dt);
  w.bytes(data.data(), sizeof(double) * static_cast<std::size_t>(data.size()));
  w.bytes(ns.min.data(), sizeof(double) * dims);
  w.bytes(ns.max.data(), sizeof(double) * dims);
}

inline TrajectoryMatrix get_trajectory(Reader& r) {
  r.expect_magic(kTrajectoryMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kTrajectoryVersion) {
    throw FormatError(r.origin() + ": unsupported trajectory version " + std::to_string(version));
  }
  const auto rows = r.get<std::uint64_t>();
  const auto dims = r.get<std::uint32_t>();
  TrajectoryMatrix t;
  t.dt_effective = r.get<double>();
  t.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dims));
  r.bytes(t.data.data(), sizeof(double) * rows * dims);
  t.norm_stats.min.resize(dims);
  t.norm_stats.max.resize(dims);
  r.bytes(t.norm_stats.min.data(), sizeof(double) * dims);
  r.bytes(t.norm_stats.max.data(), sizeof(double) * dims);
  return t;
}

}  // namespace detail

[[nodiscard]] inline std::string encode_trajectory(const TrajectoryMatrix& t) {
  Writer w;
  detail::put_trajectory(w, t.data, t.dt_effective, t.norm_stats);
  return w.buffer();
}

[[nodiscard]] inline TrajectoryMatrix decode_trajectory(std::string bytes, std::string origin = "<memory>") {
  Reader r(std::move(bytes), std::move(origin));
  auto t = detail::get_trajectory(r);
  if (!r.at_end()) throw FormatError(r.origin() + ": trailing bytes after trajectory");
  return t;
}

inline void write_trajectory(const std::filesystem::path& path, const TrajectoryMatrix& t) {
  write_file_atomic(path, encode_trajectory(t));
}

[[nodiscard]] inline TrajectoryMatrix read_trajectory(const std::filesystem::path& path) {
  return decode_trajectory(read_file(path), path.string());
}

/// Trajectory container followed by: "CWMK", u64 bit count, the mask packed
/// row-major LSB-first, then the observation spec (sparsity, multiplicative
/// sigma, additive sigma as f64; seed as u64).
[[nodiscard]] inline std::string encode_sparse(const SparseSeries& s) {
  Writer w;
  detail::put_trajectory(w, s.values, s.dt_effective, s.norm_stats);
  w.bytes(kMaskMagic, 4);
  const auto n = static_cast<std::uint64_t>(s.mask.size());
  w.put(n);
  std::vector<std::uint8_t> packed((n + 7) / 8, 0);
  const bool* bits = s.mask.data();
  for (std::uint64_t i = 0; i < n; ++i) {
    if (bits[i]) packed[i / 8] = static_cast<std::uint8_t>(packed[i / 8] | (1u << (i % 8)));
  }
  w.bytes(packed.data(), packed.size());
  w.put(s.spec.sparsity);
  w.put(s.spec.mult_noise_sigma);
  w.put(s.spec.add_noise_sigma);
  w.put(s.spec.seed);
  return w.buffer();
}

[[nodiscard]] inline SparseSeries decode_sparse(std::string bytes, std::string origin = "<memory>") {
  Reader r(std::move(bytes), std::move(origin));
  auto t = detail::get_trajectory(r);
  r.expect_magic(kMaskMagic);
  const auto n = r.get<std::uint64_t>();
  if (n != static_cast<std::uint64_t>(t.data.size())) {
    throw FormatError(r.origin() + ": mask has " + std::to_string(n) + " bits for " +
                      std::to_string(t.data.size()) + " values");
  }
  std::vector<std::uint8_t> packed((n + 7) / 8);
  r.bytes(packed.data(), packed.size());
  SparseSeries s;
  s.mask.resize(t.data.rows(), t.data.cols());
  bool* bits = s.mask.data();
  for (std::uint64_t i = 0; i < n; ++i) bits[i] = (packed[i / 8] >> (i % 8)) & 1u;
  s.spec.sparsity = r.get<double>();
  s.spec.mult_noise_sigma = r.get<double>();
  s.spec.add_noise_sigma = r.get<double>();
  s.spec.seed = r.get<std::uint64_t>();
  if (!r.at_end()) throw FormatError(r.origin() + ": trailing bytes after sparse series");
  s.values = std::move(t.data);
  s.dt_effective = t.dt_effective;
  s.norm_stats = std::move(t.norm_stats);
  return s;
}

inline void write_sparse(const std::filesystem::path& path, const SparseSeries& s) {
  write_file_atomic(path, encode_sparse(s));
}

[[nodiscard]] inline SparseSeries read_sparse(const std::filesystem::path& path) {
  return decode_sparse(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Checkpoint

/// Named tensors in insertion order plus string attributes (model kind,
/// hyperparameters).
struct Checkpoint {
  std::map<std::string, std::string> attributes;
  std::vector<std::pair<std::string, Tensor>> tensors;

  void add(std::string name, Tensor t) { tensors.emplace_back(std::move(name), std::move(t)); }

  [[nodiscard]] const Tensor& at(std::string_view name) const {
    for (const auto& [n, t] : tensors) {
      if (n == name) return t;
    }
    throw FormatError("checkpoint has no tensor '" + std::string(name) + "'");
  }

  [[nodiscard]] const std::string& attribute(const std::string& key) const {
    auto it = attributes.find(key);
    if (it == attributes.end()) throw FormatError("checkpoint has no attribute '" + key + "'");
    return it->second;
  }
};

/// Layout: "CWCK", u32 version, u32 attribute count, (key, value) strings,
/// u32 tensor count, then per tensor: name (u32 length + UTF-8), u32 rank,
/// u64 extents, f64 payload.
[[nodiscard]] inline std::string encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(c.attributes.size()));
  for (const auto& [k, v] : c.attributes) {
    w.string(k);
    w.string(v);
  }
  w.put(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    w.string(name);
    w.put(static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) w.put(static_cast<std::uint64_t>(e));
    w.bytes(t.data().data(), sizeof(double) * t.size());
  }
  return w.buffer();
}

[[nodiscard]] inline Checkpoint decode_checkpoint(std::string bytes, std::string origin = "<memory>") {
  Reader r(std::move(bytes), std::move(origin));
  r.expect_magic(kCheckpointMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(r.origin() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  const auto n_attr = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_attr; ++i) {
    auto k = r.string();
    c.attributes[k] = r.string();
  }
  const auto n_tensors = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    auto name = r.string();
    const auto rank = r.get<std::uint32_t>();
    if (rank > 3) throw FormatError(r.origin() + ": tensor '" + name + "' has rank " + std::to_string(rank));
    Tensor::Shape shape(rank);
    for (auto& e : shape) e = r.get<std::uint64_t>();
    Tensor t(shape);
    r.bytes(t.data().data(), sizeof(double) * t.size());
    c.add(std::move(name), std::move(t));
  }
  if (!r.at_end()) throw FormatError(r.origin() + ": trailing bytes after checkpoint");
  return c;
}

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_file_atomic(path, encode_checkpoint(c));
}

[[nodiscard]] inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace chronoweft::io
