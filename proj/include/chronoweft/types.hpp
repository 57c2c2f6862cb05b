#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace chronoweft {

/// Row-major dense matrix; rows are time steps, columns are state dimensions.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-dimension (min, max) recorded by min-max normalization.
struct NormStats {
  std::vector<double> min;
  std::vector<double> max;

  [[nodiscard]] std::size_t dims() const noexcept { return min.size(); }
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

/// Uniformly sampled, normalized L_s x D state sequence.
struct TrajectoryMatrix {
  Matrix data;
  double dt_effective = 0.0;
  NormStats norm_stats;

  [[nodiscard]] std::size_t length() const noexcept { return static_cast<std::size_t>(data.rows()); }
  [[nodiscard]] std::size_t dims() const noexcept { return static_cast<std::size_t>(data.cols()); }

  /// Rows [offset, offset + length) sharing this trajectory's metadata.
  [[nodiscard]] TrajectoryMatrix segment(std::size_t offset, std::size_t length) const {
    TrajectoryMatrix out;
    out.data = data.middleRows(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(length));
    out.dt_effective = dt_effective;
    out.norm_stats = norm_stats;
    return out;
  }
};

}  // namespace chronoweft
