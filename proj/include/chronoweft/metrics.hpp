#pragma once

// Pointwise errors, recovery stability, the occupancy-histogram deviation
// value, and the trivial baselines the learned models are compared with.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "chronoweft/error.hpp"
#include "chronoweft/observe.hpp"
#include "chronoweft/random.hpp"
#include "chronoweft/types.hpp"

namespace chronoweft {

inline constexpr double kDefaultStabilityThreshold = 0.01;
inline constexpr double kDefaultCellSize = 0.05;

[[nodiscard]] inline double mse(const Eigen::Ref<const Matrix>& pred, const Eigen::Ref<const Matrix>& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw DimensionError("mse: shapes " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) + " and " +
                         std::to_string(truth.rows()) + "x" + std::to_string(truth.cols()));
  }
  if (pred.size() == 0) throw UndefinedMetricError("mse: empty input");
  return (pred - truth).squaredNorm() / static_cast<double>(pred.size());
}

[[nodiscard]] inline double rmse(const Eigen::Ref<const Matrix>& pred, const Eigen::Ref<const Matrix>& truth) {
  return std::sqrt(mse(pred, truth));
}

/// Fraction of entries strictly below `threshold`.
[[nodiscard]] inline double recovery_stability(std::span<const double> errors,
                                               double threshold = kDefaultStabilityThreshold) {
  if (errors.empty()) throw UndefinedMetricError("recovery_stability: empty list");
  if (!(threshold > 0.0)) throw ValidationError("recovery_stability: threshold must be positive");
  const auto below = std::count_if(errors.begin(), errors.end(), [&](double e) { return e < threshold; });
  return static_cast<double>(below) / static_cast<double>(errors.size());
}

[[nodiscard]] inline double median(std::vector<double> v) {
  if (v.empty()) throw UndefinedMetricError("median: empty list");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

[[nodiscard]] inline double mean(std::span<const double> v) {
  if (v.empty()) throw UndefinedMetricError("mean: empty list");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------
// Occupancy and deviation value

struct OccupancyGrid {
  double cell = kDefaultCellSize;
  std::size_t mx = 0, my = 0, mz = 0;
  std::vector<double> freq;  // x-major: index = (ix * my + iy) * mz + iz
  double boundary = 0.0;     // share of points outside the bounds
  std::size_t points = 0;

  [[nodiscard]] double at(std::size_t ix, std::size_t iy, std::size_t iz) const {
    return freq.at((ix * my + iy) * mz + iz);
  }
  [[nodiscard]] double total() const { return std::accumulate(freq.begin(), freq.end(), boundary); }
};

struct Bounds {
  double lo[3] = {0.0, 0.0, 0.0};
  double hi[3] = {1.0, 1.0, 1.0};
};

namespace detail {

inline std::size_t cells_along(double lo, double hi, double cell) {
  const double ratio = (hi - lo) / cell;
  const double nearest = std::round(ratio);
  return static_cast<std::size_t>(std::abs(ratio - nearest) < 1e-9 ? nearest : std::ceil(ratio));
}

}  // namespace detail

/// Visit frequencies on a cubic lattice of cell size `cell`.  The upper edge
/// of each axis belongs to the last cell; points outside the bounds all go to
/// one boundary bucket.
[[nodiscard]] inline OccupancyGrid occupancy(const Eigen::Ref<const Matrix>& traj, double cell = kDefaultCellSize,
                                             const Bounds& bounds = {}) {
  if (traj.cols() != 3) throw DimensionError("occupancy: trajectory must be 3-D, got " + std::to_string(traj.cols()));
  if (traj.rows() == 0) throw UndefinedMetricError("occupancy: empty trajectory");
  if (!(cell > 0.0)) throw ValidationError("occupancy: cell size must be positive");
  OccupancyGrid g;
  g.cell = cell;
  std::size_t m[3];
  for (int k = 0; k < 3; ++k) {
    if (!(bounds.hi[k] > bounds.lo[k])) throw ValidationError("occupancy: empty bounds");
    m[k] = detail::cells_along(bounds.lo[k], bounds.hi[k], cell);
  }
  g.mx = m[0], g.my = m[1], g.mz = m[2];
  g.points = static_cast<std::size_t>(traj.rows());
  std::vector<std::size_t> counts(g.mx * g.my * g.mz, 0);
  std::size_t outside = 0;
  for (Eigen::Index t = 0; t < traj.rows(); ++t) {
    std::size_t idx[3];
    bool inside = true;
    for (int k = 0; k < 3; ++k) {
      const double v = traj(t, k);
      if (!(v >= bounds.lo[k] && v <= bounds.hi[k])) {
        inside = false;
        break;
      }
      const auto i = static_cast<std::size_t>(std::floor((v - bounds.lo[k]) / cell));
      idx[k] = std::min(i, m[k] - 1);
    }
    if (inside) {
      ++counts[(idx[0] * g.my + idx[1]) * g.mz + idx[2]];
    } else {
      ++outside;
    }
  }
  const auto n = static_cast<double>(g.points);
  g.freq.resize(counts.size());
  std::transform(counts.begin(), counts.end(), g.freq.begin(), [n](std::size_t c) { return static_cast<double>(c) / n; });
  g.boundary = static_cast<double>(outside) / n;
  return g;
}

/// L1 distance between two occupancy histograms, boundary bucket included.
[[nodiscard]] inline double deviation_value(const OccupancyGrid& a, const OccupancyGrid& b) {
  if (a.mx != b.mx || a.my != b.my || a.mz != b.mz) throw DimensionError("deviation_value: grids differ in shape");
  double dv = std::abs(a.boundary - b.boundary);
  for (std::size_t i = 0; i < a.freq.size(); ++i) dv += std::abs(a.freq[i] - b.freq[i]);
  return dv;
}

/// DV over equal-length windows of a predicted and a true trajectory.
[[nodiscard]] inline double deviation_value(const Eigen::Ref<const Matrix>& pred, const Eigen::Ref<const Matrix>& truth,
                                            double cell = kDefaultCellSize, const Bounds& bounds = {}) {
  if (pred.rows() != truth.rows()) {
    throw WindowMismatchError("deviation_value: windows of " + std::to_string(pred.rows()) + " and " +
                              std::to_string(truth.rows()) + " points");
  }
  return deviation_value(occupancy(pred, cell, bounds), occupancy(truth, cell, bounds));
}

// ---------------------------------------------------------------------------
// Baselines

/// Per-dimension linear interpolation between observed entries; constant
/// extension before the first and after the last.  A column with no
/// observations is filled with 0.5, the centre of the normalized range.
[[nodiscard]] inline Matrix linear_interpolation(const SparseSeries& s) {
  Matrix out(s.values.rows(), s.values.cols());
  const Eigen::Index L = s.values.rows();
  for (Eigen::Index j = 0; j < s.values.cols(); ++j) {
    Eigen::Index prev = -1;
    for (Eigen::Index i = 0; i <= L; ++i) {
      if (i < L && !s.mask(i, j)) continue;
      if (prev < 0 && i == L) {
        out.col(j).setConstant(0.5);
      } else if (prev < 0) {
        for (Eigen::Index k = 0; k <= i; ++k) out(k, j) = s.values(i, j);
      } else if (i == L) {
        for (Eigen::Index k = prev; k < L; ++k) out(k, j) = s.values(prev, j);
      } else {
        const double a = s.values(prev, j), b = s.values(i, j);
        for (Eigen::Index k = prev; k <= i; ++k) {
          const double w = static_cast<double>(k - prev) / static_cast<double>(i - prev);
          out(k, j) = (1.0 - w) * a + w * b;
        }
      }
      prev = i;
    }
  }
  return out;
}

/// Repeats `last` for `horizon` rows.
[[nodiscard]] inline Matrix persistence_forecast(const Eigen::Ref<const Eigen::RowVectorXd>& last, std::size_t horizon) {
  return last.replicate(static_cast<Eigen::Index>(horizon), 1);
}

/// Each column permuted independently in time.  Marginals are kept; the
/// joint structure of the attractor is destroyed.
[[nodiscard]] inline Matrix shuffled_surrogate(const Matrix& traj, std::uint64_t seed) {
  Matrix out = traj;
  Rng rng = make_rng(derive_seed(seed, "surrogate"));
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(traj.rows()));
  for (Eigen::Index j = 0; j < traj.cols(); ++j) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Eigen::Index i = 0; i < traj.rows(); ++i) out(i, j) = traj(perm[static_cast<std::size_t>(i)], j);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct EvalMetadata {
  std::string system;
  std::size_t seq_len = 0;
  double sparsity = 0.0;
  double noise_sigma = 0.0;
};

struct EvalReport {
  EvalMetadata meta;
  double mse = 0.0;
  double rmse = 0.0;
  std::map<double, double> recovery_stability;  // threshold -> rate
  double dv = 0.0;
  std::size_t n_realizations = 0;
};

/// Aggregate over realizations: mean MSE/RMSE and R_s at each threshold.
[[nodiscard]] inline EvalReport summarize(const EvalMetadata& meta, std::span<const double> mses,
                                          std::span<const double> thresholds = std::span<const double>()) {
  EvalReport r;
  r.meta = meta;
  r.n_realizations = mses.size();
  r.mse = mean(mses);
  std::vector<double> roots(mses.size());
  std::transform(mses.begin(), mses.end(), roots.begin(), [](double v) { return std::sqrt(v); });
  r.rmse = mean(roots);
  if (thresholds.empty()) {
    r.recovery_stability[kDefaultStabilityThreshold] = recovery_stability(mses, kDefaultStabilityThreshold);
  }
  for (double t : thresholds) r.recovery_stability[t] = recovery_stability(mses, t);
  return r;
}

}  // namespace chronoweft
