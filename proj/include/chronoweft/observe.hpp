#pragma once

// Measurement model: element-wise Bernoulli observation with multiplicative
// and additive Gaussian noise, plus the smoothed-noise control signal.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "chronoweft/dynsys.hpp"
#include "chronoweft/error.hpp"
#include "chronoweft/random.hpp"
#include "chronoweft/types.hpp"

namespace chronoweft {

struct ObservationSpec {
  double sparsity = 0.0;          // S_r: fraction of elements removed
  double mult_noise_sigma = 0.0;  // x -> x (1 + sigma xi)
  double add_noise_sigma = 0.0;   // x -> x + sigma_add xi'
  std::uint64_t seed = 0;

  [[nodiscard]] double observe_prob() const noexcept { return 1.0 - sparsity; }

  void validate() const {
    if (!(sparsity >= 0.0 && sparsity <= 1.0)) {
      throw ValidationError("sparsity must lie in [0, 1], got " + std::to_string(sparsity));
    }
    if (!(mult_noise_sigma >= 0.0) || !(add_noise_sigma >= 0.0)) {
      throw ValidationError("noise amplitudes must be non-negative");
    }
  }

  friend bool operator==(const ObservationSpec&, const ObservationSpec&) = default;
};

/// Observation matrix with zeros at unobserved entries and the mask that
/// tells observed zeros apart from missing ones.
struct SparseSeries {
  Matrix values;
  BoolMatrix mask;  // true = observed
  ObservationSpec spec;
  double dt_effective = 0.0;
  NormStats norm_stats;

  [[nodiscard]] std::size_t length() const noexcept { return static_cast<std::size_t>(values.rows()); }
  [[nodiscard]] std::size_t dims() const noexcept { return static_cast<std::size_t>(values.cols()); }

  [[nodiscard]] std::size_t observed_count() const { return static_cast<std::size_t>(mask.count()); }
};

/// Each element independently observed with probability 1 - sparsity.
[[nodiscard]] inline BoolMatrix make_mask(std::size_t rows, std::size_t cols, double sparsity,
                                          std::uint64_t seed) {
  if (!(sparsity >= 0.0 && sparsity <= 1.0)) {
    throw ValidationError("make_mask: sparsity must lie in [0, 1]");
  }
  Rng rng = make_rng(derive_seed(seed, "mask"));
  const double keep = 1.0 - sparsity;
  BoolMatrix mask(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j) mask(i, j) = uniform01(rng) < keep;
  }
  return mask;
}

[[nodiscard]] inline SparseSeries apply_observation(const TrajectoryMatrix& x, const ObservationSpec& spec) {
  spec.validate();
  SparseSeries out;
  out.spec = spec;
  out.dt_effective = x.dt_effective;
  out.norm_stats = x.norm_stats;
  out.mask = make_mask(x.length(), x.dims(), spec.sparsity, spec.seed);
  out.values = Matrix::Zero(x.data.rows(), x.data.cols());

  // Noise draws cover every element in a fixed order so the values at a given
  // position do not depend on the mask.
  Rng rng = make_rng(derive_seed(spec.seed, "measurement-noise"));
  for (Eigen::Index i = 0; i < x.data.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.data.cols(); ++j) {
      const double xi = standard_normal(rng);
      const double xi_add = standard_normal(rng);
      if (!out.mask(i, j)) continue;
      double v = x.data(i, j);
      if (spec.mult_noise_sigma > 0.0) v *= 1.0 + spec.mult_noise_sigma * xi;
      if (spec.add_noise_sigma > 0.0) v += spec.add_noise_sigma * xi_add;
      out.values(i, j) = v;
    }
  }
  return out;
}

/// Normalized Gaussian kernel truncated at radius ceil(4 sigma).
[[nodiscard]] inline std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("gaussian_kernel: sigma must be positive");
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = w;
    total += w;
  }
  for (double& w : k) w /= total;
  return k;
}

/// Independent U(0,1) noise per dimension, smoothed by a Gaussian kernel and
/// min-max normalized.  The noise is generated with a margin of one kernel
/// radius on each side so every output sample sees the full kernel.
[[nodiscard]] inline TrajectoryMatrix gen_stochastic_signal(std::size_t length, std::size_t dims,
                                                            double kernel_sigma, std::uint64_t seed,
                                                            double dt_effective = kDefaultDt *
                                                                                  kDefaultSubsample) {
  if (!(static_cast<double>(length) > 6.0 * kernel_sigma)) {
    throw ValidationError("gen_stochastic_signal: length must exceed 6 sigma_g");
  }
  const std::vector<double> kernel = gaussian_kernel(kernel_sigma);
  const std::size_t radius = kernel.size() / 2;
  Rng rng = make_rng(derive_seed(seed, "stochastic-signal"));

  TrajectoryMatrix out;
  out.dt_effective = dt_effective;
  out.data.resize(static_cast<Eigen::Index>(length), static_cast<Eigen::Index>(dims));
  std::vector<double> noise(length + 2 * radius);
  for (std::size_t j = 0; j < dims; ++j) {
    for (double& u : noise) u = uniform01(rng);
    for (std::size_t i = 0; i < length; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * noise[i + k];
      out.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = acc;
    }
  }
  out.norm_stats = normalize_columns(out.data);
  return out;
}

}  // namespace chronoweft
