#pragma once

// Catalog of chaotic flows, fixed-step RK4 integration, and preprocessing of
// raw trajectories into normalized sequences.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "chronoweft/error.hpp"
#include "chronoweft/random.hpp"
#include "chronoweft/types.hpp"

namespace chronoweft {

/// Default integration step.
inline constexpr double kDefaultDt = 0.01;
/// Integration steps discarded before a trajectory is assumed on its attractor.
inline constexpr std::size_t kDefaultTransientSteps = 50'000;
/// Integration steps per retained sample (sampling interval = 10 dt).
inline constexpr std::size_t kDefaultSubsample = 10;
/// Any state component beyond this magnitude counts as divergence.
inline constexpr double kDivergenceBound = 1e6;
/// Target sampling density for per-system strides.
inline constexpr double kSamplesPerCycle = 50.0;

/// f(params, x, t) -> dx.  Parameters are passed positionally in the order of
/// SystemSpec::param_names.
using VectorField = std::function<void(std::span<const double> params, std::span<const double> x,
                                       double t, std::span<double> dx)>;

struct ParameterSet {
  std::string label;
  std::vector<double> values;
};

struct SystemSpec {
  std::string name;          // canonical id, e.g. "sprott_5"
  std::string display_name;  // e.g. "Sprott 5"
  std::size_t dim = 3;
  VectorField field;
  std::vector<std::string> param_names;
  std::vector<double> params;
  std::vector<std::pair<double, double>> init_box;
  std::vector<ParameterSet> alternate_params;
  double typical_period = 0.0;  // mean recurrence time on the attractor (time units)

  /// Sampling stride (in integration steps of `dt`) that puts about
  /// `samples_per_cycle` points on one typical cycle; never below 1.
  [[nodiscard]] std::size_t sampling_stride(double samples_per_cycle = kSamplesPerCycle,
                                            double dt = kDefaultDt) const {
    if (!(typical_period > 0.0)) return kDefaultSubsample;
    const double stride = std::round(typical_period / (samples_per_cycle * dt));
    return stride < 1.0 ? 1 : static_cast<std::size_t>(stride);
  }

  [[nodiscard]] double param(std::string_view key) const {
    for (std::size_t i = 0; i < param_names.size(); ++i) {
      if (param_names[i] == key) return params[i];
    }
    throw ValidationError("system '" + name + "' has no parameter '" + std::string(key) + "'");
  }

  void evaluate(std::span<const double> x, double t, std::span<double> dx) const {
    field(params, x, t, dx);
  }

  [[nodiscard]] std::vector<double> evaluate(std::span<const double> x, double t = 0.0) const {
    std::vector<double> dx(dim);
    field(params, x, t, dx);
    return dx;
  }

  /// Copy of this system using one of its alternate parameter sets.
  [[nodiscard]] SystemSpec with_parameter_set(std::string_view label) const {
    for (const auto& set : alternate_params) {
      if (set.label == label) {
        SystemSpec out = *this;
        out.params = set.values;
        return out;
      }
    }
    throw ValidationError("system '" + name + "' has no parameter set '" + std::string(label) + "'");
  }
};

/// Raw integrator output; row k is the state at t0 + (k + 1) * dt.
struct RawTrajectory {
  Matrix data;
  double t0 = 0.0;
  double dt = kDefaultDt;

  [[nodiscard]] std::size_t length() const noexcept { return static_cast<std::size_t>(data.rows()); }
};

// ---------------------------------------------------------------------------
// Integration

/// Scratch buffers for rk4_step so the hot loop does not allocate.
struct Rk4Workspace {
  std::vector<double> k1, k2, k3, k4, tmp;

  void resize(std::size_t n) {
    k1.resize(n);
    k2.resize(n);
    k3.resize(n);
    k4.resize(n);
    tmp.resize(n);
  }
};

namespace detail {

inline void check_finite_derivative(std::span<const double> dx, std::span<const double> x) {
  for (double v : dx) {
    if (!std::isfinite(v)) {
      throw IntegrationError("vector field returned a non-finite derivative",
                             std::vector<double>(x.begin(), x.end()));
    }
  }
}

}  // namespace detail

/// In-place classical RK4 update of `x`.  `field(x, t, dx)` writes dx/dt.
template <class Field>
void rk4_step(Field&& field, std::span<double> x, double t, double dt, Rk4Workspace& ws) {
  if (!(dt > 0.0)) throw ValidationError("rk4_step: dt must be positive");
  const std::size_t n = x.size();
  ws.resize(n);
  auto& [k1, k2, k3, k4, tmp] = ws;

  field(std::span<const double>(x.data(), n), t, std::span<double>(k1));
  detail::check_finite_derivative(k1, x);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
  field(std::span<const double>(tmp), t + 0.5 * dt, std::span<double>(k2));
  detail::check_finite_derivative(k2, tmp);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
  field(std::span<const double>(tmp), t + 0.5 * dt, std::span<double>(k3));
  detail::check_finite_derivative(k3, tmp);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + dt * k3[i];
  field(std::span<const double>(tmp), t + dt, std::span<double>(k4));
  detail::check_finite_derivative(k4, tmp);

  for (std::size_t i = 0; i < n; ++i) {
    x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
}

template <class Field>
[[nodiscard]] std::vector<double> rk4_step(Field&& field, std::span<const double> x, double t,
                                           double dt) {
  std::vector<double> out(x.begin(), x.end());
  Rk4Workspace ws;
  rk4_step(std::forward<Field>(field), std::span<double>(out), t, dt, ws);
  return out;
}

/// Uniform draw from the system's initial-condition box.
[[nodiscard]] inline std::vector<double> random_initial_state(const SystemSpec& spec,
                                                              std::uint64_t seed) {
  Rng rng = make_rng(derive_seed(seed, "initial-state"));
  std::vector<double> x0(spec.dim);
  for (std::size_t i = 0; i < spec.dim; ++i) {
    const auto [lo, hi] = spec.init_box.at(i);
    x0[i] = lo + (hi - lo) * uniform01(rng);
  }
  return x0;
}

/// Integrates `n_steps` RK4 steps.  When `x0` is empty the initial state is
/// drawn from the system's box using `seed`; otherwise `seed` is unused.
[[nodiscard]] inline RawTrajectory simulate(const SystemSpec& spec, std::span<const double> x0,
                                            std::size_t n_steps, double dt = kDefaultDt,
                                            std::uint64_t seed = 0, double t0 = 0.0) {
  std::vector<double> x = x0.empty() ? random_initial_state(spec, seed)
                                     : std::vector<double>(x0.begin(), x0.end());
  if (x.size() != spec.dim) {
    throw ValidationError("simulate: initial state has " + std::to_string(x.size()) +
                          " components, system '" + spec.name + "' has " +
                          std::to_string(spec.dim));
  }
  RawTrajectory out;
  out.t0 = t0;
  out.dt = dt;
  out.data.resize(static_cast<Eigen::Index>(n_steps), static_cast<Eigen::Index>(spec.dim));

  auto field = [&spec](std::span<const double> s, double t, std::span<double> dx) {
    spec.field(spec.params, s, t, dx);
  };
  Rk4Workspace ws;
  double t = t0;
  for (std::size_t step = 0; step < n_steps; ++step) {
    rk4_step(field, std::span<double>(x), t, dt, ws);
    t = t0 + static_cast<double>(step + 1) * dt;
    for (std::size_t i = 0; i < spec.dim; ++i) {
      if (!(std::abs(x[i]) <= kDivergenceBound)) throw DivergenceError(spec.name, step);
      out.data(static_cast<Eigen::Index>(step), static_cast<Eigen::Index>(i)) = x[i];
    }
  }
  return out;
}

[[nodiscard]] inline RawTrajectory simulate(const SystemSpec& spec, std::size_t n_steps,
                                            double dt = kDefaultDt, std::uint64_t seed = 0) {
  return simulate(spec, std::span<const double>(), n_steps, dt, seed);
}

// ---------------------------------------------------------------------------
// Preprocessing

/// Per-column min-max normalization to [0, 1].  Throws on a constant column.
[[nodiscard]] inline NormStats normalize_columns(Matrix& data) {
  NormStats stats;
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    const double lo = data.col(j).minCoeff();
    const double hi = data.col(j).maxCoeff();
    if (!(hi > lo)) {
      throw DegenerateNormalizationError("dimension " + std::to_string(j) +
                                         " is constant; cannot min-max normalize");
    }
    data.col(j) = (data.col(j).array() - lo) / (hi - lo);
    stats.min.push_back(lo);
    stats.max.push_back(hi);
  }
  return stats;
}

/// Drops `transient_cut` rows, keeps every `subsample`-th row, projects onto
/// `project_dims` (default: the first three when D > 3) and min-max
/// normalizes each retained dimension.
[[nodiscard]] inline TrajectoryMatrix preprocess(const RawTrajectory& raw, std::size_t transient_cut,
                                                 std::size_t subsample,
                                                 std::optional<std::vector<std::size_t>> project_dims =
                                                     std::nullopt) {
  if (subsample < 1) throw ValidationError("preprocess: subsample must be >= 1");
  if (raw.length() <= transient_cut) {
    throw ValidationError("preprocess: trajectory of length " + std::to_string(raw.length()) +
                          " is not longer than the transient cut " + std::to_string(transient_cut));
  }
  std::vector<std::size_t> dims;
  if (project_dims) {
    dims = *project_dims;
  } else {
    const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(raw.data.cols()), 3);
    for (std::size_t j = 0; j < keep; ++j) dims.push_back(j);
  }
  for (std::size_t d : dims) {
    if (d >= static_cast<std::size_t>(raw.data.cols())) {
      throw ValidationError("preprocess: projection dimension " + std::to_string(d) + " out of range");
    }
  }

  const std::size_t remaining = raw.length() - transient_cut;
  const std::size_t rows = (remaining + subsample - 1) / subsample;
  TrajectoryMatrix out;
  out.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dims.size()));
  for (std::size_t r = 0; r < rows; ++r) {
    const auto src = static_cast<Eigen::Index>(transient_cut + r * subsample);
    for (std::size_t j = 0; j < dims.size(); ++j) {
      out.data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          raw.data(src, static_cast<Eigen::Index>(dims[j]));
    }
  }
  out.dt_effective = raw.dt * static_cast<double>(subsample);
  out.norm_stats = normalize_columns(out.data);
  return out;
}

// ---------------------------------------------------------------------------
// Catalog

namespace detail {

inline std::vector<std::pair<double, double>> unit_box(std::size_t dim) {
  return std::vector<std::pair<double, double>>(dim, {0.0, 1.0});
}

/// Box of half-width `half` around a point known to lie in the attractor's basin.
inline std::vector<std::pair<double, double>> box_around(std::vector<double> center, double half) {
  std::vector<std::pair<double, double>> box;
  for (double c : center) box.emplace_back(c - half, c + half);
  return box;
}

inline SystemSpec make_system(std::string name, std::string display, std::size_t dim,
                              std::vector<std::string> names, std::vector<double> values,
                              VectorField field) {
  SystemSpec s;
  s.name = std::move(name);
  s.display_name = std::move(display);
  s.dim = dim;
  s.param_names = std::move(names);
  s.params = std::move(values);
  s.field = std::move(field);
  s.init_box = unit_box(dim);
  return s;
}

/// Sprott flows carry their coefficients inline; they have no named parameters.
inline SystemSpec sprott(int index, VectorField field) {
  return make_system("sprott_" + std::to_string(index), "Sprott " + std::to_string(index), 3, {}, {},
                     std::move(field));
}

inline std::string canonical_name(std::string_view name) {
  std::string out;
  for (char c : name) {
    if (c == ' ' || c == '-') {
      out.push_back('_');
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

}  // namespace detail

/// The 31 systems: nine named training flows, Sprott cases 0-18, and the
/// three held-out targets (food chain, Lorenz, Lotka-Volterra).
[[nodiscard]] inline std::vector<SystemSpec> catalog() {
  using detail::make_system;
  using detail::sprott;
  using P = std::span<const double>;
  using X = std::span<const double>;
  using D = std::span<double>;
  std::vector<SystemSpec> out;
  out.reserve(31);

  out.push_back(make_system("aizawa", "Aizawa", 3, {"a", "b", "c", "d", "e", "f"},
                            {0.95, 0.7, 0.6, 3.5, 0.25, 0.1}, [](P p, X s, double, D dx) {
                              const double a = p[0], b = p[1], c = p[2], d = p[3], e = p[4], f = p[5];
                              const double x = s[0], y = s[1], z = s[2];
                              dx[0] = (z - b) * x - d * y;
                              dx[1] = d * x + (z - b) * y;
                              dx[2] = c + a * z - z * z * z / 3.0 - (x * x + y * y) * (1.0 + e * z) +
                                      f * z * x * x * x;
                            }));
  out.push_back(make_system("bouali", "Bouali", 3, {"alpha", "beta", "a", "b", "c", "s"},
                            {0.3, 0.05, 4.0, 1.0, 1.5, 1.0}, [](P p, X v, double, D dx) {
                              const double alpha = p[0], beta = p[1], a = p[2], b = p[3], c = p[4],
                                           s = p[5];
                              const double x = v[0], y = v[1], z = v[2];
                              dx[0] = x * (a - y) + alpha * z;
                              dx[1] = -y * (b - x * x);
                              dx[2] = -x * (c - s * z) - beta * z;
                            }));
  out.push_back(make_system("chua", "Chua", 3, {"alpha", "gamma", "beta", "mu0", "mu1"},
                            {15.6, 1.0, 28.0, -1.143, -0.714}, [](P p, X s, double, D dx) {
                              const double alpha = p[0], gamma = p[1], beta = p[2], mu0 = p[3],
                                           mu1 = p[4];
                              const double x = s[0], y = s[1], z = s[2];
                              const double ht = mu1 * x + 0.5 * (mu0 - mu1) * (std::abs(x + 1.0) -
                                                                               std::abs(x - 1.0));
                              dx[0] = alpha * (y - x - ht);
                              dx[1] = gamma * (x - y + z);
                              dx[2] = -beta * y;
                            }));
  out.push_back(make_system("dadras", "Dadras", 3, {"a", "b", "c", "d", "e"},
                            {3.0, 2.7, 1.7, 2.0, 9.0}, [](P p, X s, double, D dx) {
                              const double a = p[0], b = p[1], c = p[2], d = p[3], e = p[4];
                              const double x = s[0], y = s[1], z = s[2];
                              dx[0] = y - a * x + b * y * z;
                              dx[1] = c * y - x * z + z;
                              dx[2] = d * x * y - e * z;
                            }));
  out.push_back(make_system("four_wing", "Four wing", 3, {"a", "b", "c"}, {0.2, 0.01, -0.4},
                            [](P p, X s, double, D dx) {
                              const double a = p[0], b = p[1], c = p[2];
                              const double x = s[0], y = s[1], z = s[2];
                              dx[0] = a * x + y * z;
                              dx[1] = b * x + c * y - x * z;
                              dx[2] = -z - x * y;
                            }));
  out.push_back(make_system("hastings_powell", "Hastings-Powell", 3,
                            {"a1", "a2", "b1", "b2", "d1", "d2"}, {5.0, 0.1, 3.0, 2.0, 0.4, 0.01},
                            [](P p, X s, double, D dx) {
                              const double a1 = p[0], a2 = p[1], b1 = p[2], b2 = p[3], d1 = p[4],
                                           d2 = p[5];
                              const double v = s[0], h = s[1], q = s[2];
                              const double f1 = a1 * v * h / (b1 * v + 1.0);
                              const double f2 = a2 * h * q / (b2 * h + 1.0);
                              dx[0] = v * (1.0 - v) - f1;
                              dx[1] = f1 - f2 - d1 * h;
                              dx[2] = f2 - d2 * q;
                            }));
  out.push_back(make_system("rikitake", "Rikitake", 3, {"mu", "a"}, {2.0, 5.0},
                            [](P p, X s, double, D dx) {
                              const double mu = p[0], a = p[1];
                              const double x = s[0], y = s[1], z = s[2];
                              dx[0] = -mu * x + z * y;
                              dx[1] = -mu * y + x * (z - a);
                              dx[2] = 1.0 - x * y;
                            }));
  out.push_back(make_system("rossler", "Rossler", 3, {"a", "b", "c"}, {0.2, 0.2, 5.7},
                            [](P p, X s, double, D dx) {
                              const double a = p[0], b = p[1], c = p[2];
                              const double x = s[0], y = s[1], z = s[2];
                              dx[0] = -(y + z);
                              dx[1] = x + a * y;
                              dx[2] = b + z * (x - c);
                            }));
  out.push_back(make_system("wang", "Wang", 3, {"a"}, {3.0}, [](P p, X s, double, D dx) {
    const double a = p[0];
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = x - y * z;
    dx[1] = x - y + x * z;
    dx[2] = -a * z + x * y;
  }));

  out.push_back(sprott(0, [](P, X s, double, D dx) {
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = y;
    dx[1] = -x + y * z;
    dx[2] = 1.0 - y * y;
  }));
  out.push_back(sprott(1, [](P, X s, double, D dx) {
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = y * z;
    dx[1] = x - y;
    dx[2] = 1.0 - x * y;
  }));
  out.push_back(sprott(2, [](P, X s, double, D dx) {
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = y * z;
    dx[1] = x - y;
    dx[2] = 1.0 - x * x;
  }));
  out.push_back(sprott(3, [](P, X s, double, D dx) {
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = -y;
    dx[1] = x + z;
    dx[2] = x * z + 3.0 * y * y;
  }));
  out.push_back(sprott(4, [](P, X s, double, D dx) {
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = y * z;
    dx[1] = x * x - y;
    dx[2] = 1.0 - 4.0 * x;
  }));
  out.push_back(sprott(5, [](P, X s, double, D dx) {
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = y + z;
    dx[1] = -x + 0.5 * y;
    dx[2] = x * x - z;
  }));
  out.push_back(sprott(6, [](P, X s, double, D dx) {
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = 0.4 * x + z;
    dx[1] = x * z - y;
    dx[2] = -x + y;
  }));
  out.push_back(sprott(7, [](P, X s, double, D dx) {
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = -y + z * z;
    dx[1] = x + 0.5 * y;
    dx[2] = x - z;
  }));
  out.push_back(sprott(8, [](P, X s, double, D dx) {
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = -0.2 * y;
    dx[1] = x + z;
    dx[2] = x + y * y - z;
  }));
  out.push_back(sprott(9, [](P, X s, double, D dx) {
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = 2.0 * z;
    dx[1] = -2.0 * y + z;
    dx[2] = -x + y + y * y;
  }));
  out.push_back(sprott(10, [](P, X s, double, D dx) {
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = x * y - z;
    dx[1] = x - y;
    dx[2] = x + 0.3 * z;
  }));
  out.push_back(sprott(11, [](P, X s, double, D dx) {
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = y + 3.9 * z;
    dx[1] = 0.9 * x * x - y;
    dx[2] = 1.0 - x;
  }));
  out.push_back(sprott(12, [](P, X s, double, D dx) {
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = -z;
    dx[1] = -x * x - y;
    dx[2] = 1.7 + 1.7 * x + y;
  }));
  out.push_back(sprott(13, [](P, X s, double, D dx) {
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = -2.0 * y;
    dx[1] = x + z * z;
    dx[2] = 1.0 + y - 2.0 * z;
  }));
  out.push_back(sprott(14, [](P, X s, double, D dx) {
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = y;
    dx[1] = x - z;
    dx[2] = x + x * z + 2.7 * y;
  }));
  out.push_back(sprott(15, [](P, X s, double, D dx) {
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = 2.7 * y + z;
    dx[1] = -x + y * y;
    dx[2] = x + y;
  }));
  out.push_back(sprott(16, [](P, X s, double, D dx) {
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = -z;
    dx[1] = x - y;
    dx[2] = 3.1 * x + y * y + 0.5 * z;
  }));
  out.push_back(sprott(17, [](P, X s, double, D dx) {
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = 0.9 - y;
    dx[1] = 0.4 + z;
    dx[2] = x * y - z;
  }));
  out.push_back(sprott(18, [](P, X s, double, D dx) {
    const double x = s[0], y = s[1], z = s[2];
    dx[0] = -x - 4.0 * y;
    dx[1] = x + z * z;
    dx[2] = 1.0 + x;
  }));

  // Targets.
  {
    auto food = make_system("food_chain", "Food chain", 3, {"K", "xc", "yc", "xp", "yp", "R0", "C0"},
                            {0.99, 0.4, 2.009, 0.08, 2.876, 0.16129, 0.5}, [](P p, X s, double, D dx) {
                              const double k = p[0], xc = p[1], yc = p[2], xp = p[3], yp = p[4],
                                           r0 = p[5], c0 = p[6];
                              const double r = s[0], c = s[1], q = s[2];
                              dx[0] = r * (1.0 - r / k) - xc * yc * c * r / (r + r0);
                              dx[1] = xc * c * (yc * r / (r + r0) - 1.0) - xp * yp * q * c / (c + c0);
                              dx[2] = xp * q * (yp * c / (c + c0) - 1.0);
                            });
    // At K = 1.0 the chaotic set is transient and the predator dies out; just
    // below the crisis the attractor persists.
    food.init_box = detail::box_around({0.86, 0.18, 0.68}, 0.02);
    out.push_back(std::move(food));
  }
  {
    auto lorenz = make_system("lorenz", "Lorenz", 3, {"sigma", "rho", "beta"},
                              {10.0, 28.0, 8.0 / 3.0}, [](P p, X s, double, D dx) {
                                const double sigma = p[0], rho = p[1], beta = p[2];
                                const double x = s[0], y = s[1], z = s[2];
                                dx[0] = sigma * (y - x);
                                dx[1] = x * (rho - z) - y;
                                dx[2] = x * y - beta * z;
                              });
    // Literal values as printed in the source table; they lead to a stable
    // fixed point rather than the butterfly attractor.
    lorenz.alternate_params.push_back({"literal", {10.0, 2.67, 26.0}});
    out.push_back(std::move(lorenz));
  }
  out.push_back(make_system(
      "lotka_volterra", "Lotka-Volterra", 4,
      {"r1", "r2", "r3", "r4", "a11", "a12", "a13", "a14", "a21", "a22", "a23", "a24", "a31", "a32",
       "a33", "a34", "a41", "a42", "a43", "a44"},
      {1.0, 0.72, 1.53, 1.27, 1.0, 1.09, 1.52, 0.0, 0.0, 1.0, 0.44, 1.36, 2.33, 0.0, 1.0, 0.47, 1.21,
       0.51, 0.35, 1.0},
      [](P p, X s, double, D dx) {
        for (std::size_t i = 0; i < 4; ++i) {
          double interaction = 0.0;
          for (std::size_t j = 0; j < 4; ++j) interaction += p[4 + 4 * i + j] * s[j];
          dx[i] = p[i] * s[i] * (1.0 - interaction);
        }
      }));
  // Flows whose unit-box starts escape to infinity start near their attractor.
  const std::vector<std::pair<std::string_view, std::vector<double>>> basin_points = {
      {"chua", {0.993, -0.226, -0.972}},     {"sprott_3", {-1.365, -0.778, 2.986}},
      {"sprott_5", {-0.831, -0.816, 0.818}}, {"sprott_6", {-0.073, -0.331, -0.134}},
      {"sprott_7", {-0.279, 0.001, -1.416}}, {"sprott_8", {-0.086, 0.600, 0.219}},
      {"sprott_10", {-0.5, -0.3, 0.5}},      {"sprott_11", {3.432, 30.054, -10.999}},
      {"sprott_12", {0.053, -1.767, 1.413}}, {"sprott_14", {0.173, -0.243, 0.916}},
      {"sprott_15", {0.114, 0.503, -0.160}},
  };
  // Mean upward mean-crossing interval of the fastest coordinate, measured
  // over 2000 time units after the transient.  Sprott 0 is conservative and
  // its period depends on the start (about 4.3 to 7.5), so its entry is the
  // median over 28 starts.
  const std::vector<std::pair<std::string_view, double>> periods = {
      {"aizawa", 1.79},     {"bouali", 2.52},     {"chua", 1.47},       {"dadras", 2.36},
      {"four_wing", 30.3},  {"hastings_powell", 18.3}, {"rikitake", 4.57}, {"rossler", 5.85},
      {"wang", 3.74},       {"sprott_0", 6.1},    {"sprott_1", 6.49},   {"sprott_2", 5.85},
      {"sprott_3", 5.85},   {"sprott_4", 6.54},   {"sprott_5", 8.48},   {"sprott_6", 5.81},
      {"sprott_7", 6.27},   {"sprott_8", 10.8},   {"sprott_9", 4.83},   {"sprott_10", 7.07},
      {"sprott_11", 3.39},  {"sprott_12", 5.38},  {"sprott_13", 4.83},  {"sprott_14", 4.89},
      {"sprott_15", 6.02},  {"sprott_16", 3.72},  {"sprott_17", 6.99},  {"sprott_18", 3.32},
      {"food_chain", 40.0}, {"lorenz", 0.752},    {"lotka_volterra", 32.3},
  };
  for (auto& s : out) {
    for (const auto& [name, point] : basin_points) {
      if (s.name == name) s.init_box = detail::box_around(point, 0.05);
    }
    for (const auto& [name, period] : periods) {
      if (s.name == name) s.typical_period = period;
    }
  }
  return out;
}

/// Names of the three held-out target systems.
[[nodiscard]] inline std::vector<std::string> target_system_names() {
  return {"food_chain", "lorenz", "lotka_volterra"};
}

/// Case-insensitive lookup; spaces and hyphens match underscores.
[[nodiscard]] inline SystemSpec find_system(std::string_view name) {
  const std::string key = detail::canonical_name(name);
  for (auto& s : catalog()) {
    if (s.name == key) return s;
  }
  throw ValidationError("unknown system '" + std::string(name) + "'");
}

}  // namespace chronoweft
