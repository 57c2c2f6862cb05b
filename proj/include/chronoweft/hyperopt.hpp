#pragma once

// Random search over mixed continuous / integer / categorical spaces.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "chronoweft/error.hpp"
#include "chronoweft/random.hpp"

namespace chronoweft {

struct ParamDomain {
  enum class Kind { linear, log10, integer, categorical };

  std::string name;
  Kind kind = Kind::linear;
  double lo = 0.0, hi = 1.0;          // linear / log10 bounds (log10: in value space)
  std::int64_t ilo = 0, ihi = 0;      // inclusive integer range
  std::vector<std::string> choices;   // categorical

  void validate() const {
    switch (kind) {
      case Kind::linear:
        if (!(lo <= hi)) throw ValidationError("search space '" + name + "': lo > hi");
        break;
      case Kind::log10:
        if (!(lo > 0.0 && lo <= hi)) throw ValidationError("search space '" + name + "': log range must be positive");
        break;
      case Kind::integer:
        if (ilo > ihi) throw ValidationError("search space '" + name + "': lo > hi");
        break;
      case Kind::categorical:
        if (choices.empty()) throw ValidationError("search space '" + name + "': no choices");
        break;
    }
  }
};

/// Parses "linear:lo:hi", "log10:lo:hi", "int:lo:hi" or "choice:a,b,c".
[[nodiscard]] inline ParamDomain parse_domain(std::string name, std::string_view text) {
  ParamDomain d;
  d.name = std::move(name);
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw ValidationError("search space '" + d.name + "': expected kind:range");
  const std::string_view kind = text.substr(0, colon);
  const std::string rest(text.substr(colon + 1));
  auto split = [](const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
      if (i == s.size() || s[i] == sep) {
        out.push_back(s.substr(start, i - start));
        start = i + 1;
      }
    }
    return out;
  };
  try {
    if (kind == "choice") {
      d.kind = ParamDomain::Kind::categorical;
      d.choices = split(rest, ',');
    } else {
      const auto parts = split(rest, ':');
      if (parts.size() != 2) throw ValidationError("search space '" + d.name + "': expected two bounds");
      if (kind == "linear" || kind == "log10") {
        d.kind = kind == "linear" ? ParamDomain::Kind::linear : ParamDomain::Kind::log10;
        d.lo = std::stod(parts[0]);
        d.hi = std::stod(parts[1]);
      } else if (kind == "int") {
        d.kind = ParamDomain::Kind::integer;
        d.ilo = std::stoll(parts[0]);
        d.ihi = std::stoll(parts[1]);
      } else {
        throw ValidationError("search space '" + d.name + "': unknown kind '" + std::string(kind) + "'");
      }
    }
  } catch (const std::logic_error&) {
    throw ValidationError("search space '" + d.name + "': cannot parse '" + std::string(text) + "'");
  }
  d.validate();
  return d;
}

struct SearchSpace {
  std::vector<ParamDomain> params;

  SearchSpace& add(ParamDomain d) {
    d.validate();
    params.push_back(std::move(d));
    return *this;
  }
  SearchSpace& linear(std::string name, double lo, double hi) {
    ParamDomain d;
    d.name = std::move(name);
    d.lo = lo;
    d.hi = hi;
    return add(std::move(d));
  }
  SearchSpace& log10(std::string name, double lo, double hi) {
    ParamDomain d;
    d.name = std::move(name);
    d.kind = ParamDomain::Kind::log10;
    d.lo = lo;
    d.hi = hi;
    return add(std::move(d));
  }
  SearchSpace& integer(std::string name, std::int64_t lo, std::int64_t hi) {
    ParamDomain d;
    d.name = std::move(name);
    d.kind = ParamDomain::Kind::integer;
    d.ilo = lo;
    d.ihi = hi;
    return add(std::move(d));
  }
  SearchSpace& categorical(std::string name, std::vector<std::string> choices) {
    ParamDomain d;
    d.name = std::move(name);
    d.kind = ParamDomain::Kind::categorical;
    d.choices = std::move(choices);
    return add(std::move(d));
  }

  void validate() const {
    if (params.empty()) throw ValidationError("search space is empty");
    for (const auto& p : params) p.validate();
  }
};

using ParamValue = std::variant<double, std::int64_t, std::string>;

/// One sampled configuration, in search-space order.
struct ParamSample {
  std::vector<std::pair<std::string, ParamValue>> values;

  [[nodiscard]] const ParamValue& at(std::string_view name) const {
    for (const auto& [n, v] : values) {
      if (n == name) return v;
    }
    throw ValidationError("sample has no parameter '" + std::string(name) + "'");
  }

  [[nodiscard]] double number(std::string_view name) const {
    const auto& v = at(name);
    if (const auto* d = std::get_if<double>(&v)) return *d;
    if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    return std::stod(std::get<std::string>(v));
  }

  [[nodiscard]] std::string text(std::string_view name) const {
    const auto& v = at(name);
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", std::get<double>(v));
    return buf;
  }
};

/// Independent draw per parameter; log10 domains are uniform in the exponent.
[[nodiscard]] inline ParamSample sample(const SearchSpace& space, std::uint64_t seed) {
  space.validate();
  Rng rng = make_rng(derive_seed(seed, "search-sample"));
  ParamSample s;
  for (const auto& p : space.params) {
    switch (p.kind) {
      case ParamDomain::Kind::linear:
        s.values.emplace_back(p.name, p.lo + (p.hi - p.lo) * uniform01(rng));
        break;
      case ParamDomain::Kind::log10: {
        const double a = std::log10(p.lo), b = std::log10(p.hi);
        s.values.emplace_back(p.name, std::pow(10.0, a + (b - a) * uniform01(rng)));
        break;
      }
      case ParamDomain::Kind::integer:
        s.values.emplace_back(p.name, std::uniform_int_distribution<std::int64_t>(p.ilo, p.ihi)(rng));
        break;
      case ParamDomain::Kind::categorical: {
        const auto i = std::uniform_int_distribution<std::size_t>(0, p.choices.size() - 1)(rng);
        s.values.emplace_back(p.name, p.choices[i]);
        break;
      }
    }
  }
  return s;
}

struct TrialRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  ParamSample config;
  std::optional<double> objective;  // empty when the trial failed
  std::string failure;
  double wall_time = 0.0;  // seconds

  [[nodiscard]] bool ok() const noexcept { return objective.has_value(); }
};

struct SearchResult {
  TrialRecord best;
  std::vector<TrialRecord> history;
};

/// Objective gets the sampled config and a per-trial seed.  Exceptions and
/// non-finite values mark the trial failed.
using Objective = std::function<double(const ParamSample&, std::uint64_t trial_seed)>;

/// Trial i uses seed derive_seed(seed, "trial", i), so the first k trials of
/// a longer search are exactly a k-trial search.
[[nodiscard]] inline SearchResult random_search(const SearchSpace& space, std::size_t trials, const Objective& objective,
                                                std::uint64_t seed) {
  if (trials == 0) throw ValidationError("random_search: trials must be >= 1");
  space.validate();
  SearchResult result;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < trials; ++i) {
    TrialRecord rec;
    rec.index = i;
    rec.seed = derive_seed(seed, "trial", i);
    rec.config = sample(space, rec.seed);
    const auto start = std::chrono::steady_clock::now();
    try {
      const double v = objective(rec.config, rec.seed);
      if (std::isfinite(v)) {
        rec.objective = v;
      } else {
        rec.failure = "non-finite objective";
      }
    } catch (const std::exception& e) {
      rec.failure = e.what();
    }
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (rec.ok() && (!best || *rec.objective < *result.history[*best].objective)) best = i;
    result.history.push_back(std::move(rec));
  }
  if (!best) throw SearchExhaustedError("random_search: all " + std::to_string(trials) + " trials failed");
  result.best = result.history[*best];
  return result;
}

}  // namespace chronoweft
