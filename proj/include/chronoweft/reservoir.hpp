#pragma once

// Leaky echo-state network: random fixed recurrence, ridge-trained linear
// readout, closed-loop generation.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "chronoweft/dynsys.hpp"
#include "chronoweft/error.hpp"
#include "chronoweft/io.hpp"
#include "chronoweft/random.hpp"
#include "chronoweft/types.hpp"

namespace chronoweft {

struct ReservoirConfig {
  std::size_t size = 300;        // N_s
  double leak = 0.3;             // alpha_r
  double ridge = 1e-6;           // beta_r
  double input_scale = 1.0;      // gamma_r
  double spectral_radius = 1.0;  // rho_r
  double link_prob = 0.1;        // d_r
  double train_noise = 0.0;      // sigma_r
  std::size_t washout = 100;
  std::uint64_t seed = 0;

  /// Tuned values for the three target systems.
  [[nodiscard]] static ReservoirConfig preset(std::string_view system) {
    const std::string name = detail::canonical_name(system);
    ReservoirConfig c;
    if (name == "food_chain") {
      c.leak = 0.36, c.ridge = std::pow(10.0, -1.25), c.input_scale = 1.16;
      c.spectral_radius = 1.29, c.link_prob = 0.41, c.train_noise = std::pow(10.0, -4.70);
    } else if (name == "lorenz") {
      c.leak = 0.30, c.ridge = std::pow(10.0, -5.15), c.input_scale = 1.82;
      c.spectral_radius = 1.30, c.link_prob = 0.68, c.train_noise = std::pow(10.0, -2.04);
    } else if (name == "lotka_volterra") {
      c.leak = 0.29, c.ridge = std::pow(10.0, -6.62), c.input_scale = 0.19;
      c.spectral_radius = 1.72, c.link_prob = 0.02, c.train_noise = std::pow(10.0, -2.73);
    } else {
      throw ValidationError("no reservoir preset for system '" + std::string(system) + "'");
    }
    return c;
  }

  void validate() const {
    if (size == 0) throw ValidationError("reservoir size must be >= 1");
    if (!(leak > 0.0 && leak <= 1.0)) throw ValidationError("reservoir leak must lie in (0, 1]");
    if (!(ridge >= 0.0)) throw ValidationError("reservoir ridge must be >= 0");
    if (!(link_prob >= 0.0 && link_prob <= 1.0)) throw ValidationError("reservoir link_prob must lie in [0, 1]");
    if (!(input_scale >= 0.0) || !(spectral_radius >= 0.0) || !(train_noise >= 0.0)) {
      throw ValidationError("reservoir input_scale, spectral_radius and train_noise must be >= 0");
    }
  }

  friend bool operator==(const ReservoirConfig&, const ReservoirConfig&) = default;
};

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct ReservoirModel {
  ReservoirConfig config;
  Eigen::MatrixXd w_in;   // N_s x D_i
  SparseMatrix a;         // N_s x N_s
  Eigen::MatrixXd w_out;  // D_o x N_s, empty until trained

  [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(a.rows()); }
  [[nodiscard]] std::size_t input_dim() const noexcept { return static_cast<std::size_t>(w_in.cols()); }
  [[nodiscard]] bool trained() const noexcept { return w_out.size() > 0; }
};

/// Largest eigenvalue magnitude, from a full eigendecomposition.
[[nodiscard]] inline double spectral_radius(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw DimensionError("spectral_radius: matrix is not square");
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(m, false);
  if (solver.info() != Eigen::Success) throw NumericalError("spectral_radius: eigensolver did not converge");
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

[[nodiscard]] inline ReservoirModel init_reservoir(const ReservoirConfig& cfg, std::size_t input_dim) {
  cfg.validate();
  if (input_dim == 0) throw ValidationError("init_reservoir: input_dim must be >= 1");
  ReservoirModel m;
  m.config = cfg;
  const auto n = static_cast<Eigen::Index>(cfg.size);

  Rng in_rng = make_rng(derive_seed(cfg.seed, "reservoir-input"));
  std::uniform_real_distribution<double> in_dist(-cfg.input_scale, cfg.input_scale);
  m.w_in.resize(n, static_cast<Eigen::Index>(input_dim));
  for (Eigen::Index i = 0; i < m.w_in.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.w_in.cols(); ++j) m.w_in(i, j) = in_dist(in_rng);
  }

  Rng a_rng = make_rng(derive_seed(cfg.seed, "reservoir-recurrence"));
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (uniform01(a_rng) < cfg.link_prob) dense(i, j) = standard_normal(a_rng);
    }
  }
  const double radius = spectral_radius(dense);
  if (!(radius > 1e-12)) {
    throw DegenerateReservoirError("init_reservoir: recurrence matrix has zero spectral radius (N_s=" +
                                   std::to_string(cfg.size) + ", d_r=" + std::to_string(cfg.link_prob) + ")");
  }
  dense *= cfg.spectral_radius / radius;
  m.a = dense.sparseView();
  m.a.makeCompressed();
  return m;
}

/// r' = (1 - alpha) r + alpha tanh(A r + W_in i).
[[nodiscard]] inline Eigen::VectorXd advance(const ReservoirModel& m, const Eigen::VectorXd& r,
                                             const Eigen::VectorXd& input) {
  const double alpha = m.config.leak;
  Eigen::VectorXd pre = m.a * r + m.w_in * input;
  return (1.0 - alpha) * r + alpha * pre.array().tanh().matrix();
}

/// W_out = U Rᵀ (R Rᵀ + beta I)^-1 via a Cholesky solve.
[[nodiscard]] inline Eigen::MatrixXd ridge_readout(const Eigen::MatrixXd& states, const Eigen::MatrixXd& targets,
                                                   double beta) {
  if (states.cols() == 0) throw InsufficientDataError("ridge_readout: no training columns");
  if (states.cols() != targets.cols()) {
    throw DimensionError("ridge_readout: " + std::to_string(states.cols()) + " state columns, " +
                         std::to_string(targets.cols()) + " target columns");
  }
  if (!(beta >= 0.0)) throw ValidationError("ridge_readout: beta must be >= 0");
  const Eigen::Index n = states.rows();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(states);
  gram = gram.selfadjointView<Eigen::Lower>();
  gram.diagonal().array() += beta;
  const Eigen::MatrixXd cross = states * targets.transpose();  // R Uᵀ = (U Rᵀ)ᵀ

  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  bool ok = llt.info() == Eigen::Success;
  if (ok) {
    const Eigen::VectorXd d = llt.matrixL().toDenseMatrix().diagonal().cwiseAbs();
    ok = d.minCoeff() > 1e-10 * std::max(1.0, d.maxCoeff());
  }
  if (!ok) {
    throw RegularizationError("ridge_readout: R Rᵀ + beta I is singular at beta=" + std::to_string(beta) +
                              "; use beta > 0");
  }
  return llt.solve(cross).transpose();
}

namespace detail {

inline void require_segment(const TrajectoryMatrix& s, const ReservoirModel& m, std::size_t index) {
  if (s.dims() != m.input_dim()) {
    throw DimensionError("segment " + std::to_string(index) + " has " + std::to_string(s.dims()) +
                         " dims, reservoir expects " + std::to_string(m.input_dim()));
  }
}

}  // namespace detail

/// Teacher-forced training.  Each segment starts from r = 0 and is driven by
/// its inputs plus sigma_r noise; after the washout the pairs
/// (r(t+1), i(t+1)) are collected, where r(t+1) is the state after consuming
/// i(t).  One readout is fitted to all pairs.
[[nodiscard]] inline ReservoirModel train_on_segments(const std::vector<TrajectoryMatrix>& segments,
                                                      const ReservoirConfig& cfg) {
  if (segments.empty()) throw InsufficientDataError("train_on_segments: no segments");
  ReservoirModel m = init_reservoir(cfg, segments.front().dims());
  const std::size_t w = cfg.washout;
  std::size_t columns = 0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    detail::require_segment(segments[s], m, s);
    if (segments[s].length() <= w + 1) {
      throw InsufficientDataError("segment " + std::to_string(s) + " has " + std::to_string(segments[s].length()) +
                                  " rows; needs more than washout + 1 = " + std::to_string(w + 1));
    }
    columns += segments[s].length() - 1 - w;
  }
  const auto n = static_cast<Eigen::Index>(m.size());
  const auto d = static_cast<Eigen::Index>(m.input_dim());
  Eigen::MatrixXd states(n, static_cast<Eigen::Index>(columns));
  Eigen::MatrixXd targets(d, static_cast<Eigen::Index>(columns));
  Eigen::Index col = 0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    Rng noise = make_rng(derive_seed(cfg.seed, "reservoir-train-noise", s));
    const Matrix& x = segments[s].data;
    Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd input(d);
    for (Eigen::Index t = 0; t + 1 < x.rows(); ++t) {
      for (Eigen::Index j = 0; j < d; ++j) input(j) = x(t, j) + cfg.train_noise * standard_normal(noise);
      r = advance(m, r, input);
      if (static_cast<std::size_t>(t) >= w) {
        states.col(col) = r;
        targets.col(col) = x.row(t + 1).transpose();
        ++col;
      }
    }
  }
  m.w_out = ridge_readout(states, targets, cfg.ridge);
  return m;
}

inline constexpr double kDivergenceLimit = 10.0;

struct ClosedLoopPrediction {
  TrajectoryMatrix trajectory;
  bool truncated = false;        // some output exceeded the divergence limit
  std::size_t divergence_step = 0;  // first such step, valid when truncated
};

/// Open-loop drive through `warmup`, then `horizon` autonomous steps with
/// each output fed back as the next input.  Outputs beyond ±10 are clipped
/// and flagged.
[[nodiscard]] inline ClosedLoopPrediction closed_loop_predict(const ReservoirModel& m, const TrajectoryMatrix& warmup,
                                                              std::size_t horizon) {
  if (!m.trained()) throw ValidationError("closed_loop_predict: reservoir has no readout");
  detail::require_segment(warmup, m, 0);
  if (warmup.length() < m.config.washout || warmup.length() == 0) {
    throw InsufficientDataError("closed_loop_predict: warmup has " + std::to_string(warmup.length()) +
                                " rows, washout is " + std::to_string(m.config.washout));
  }
  ClosedLoopPrediction out;
  out.trajectory.dt_effective = warmup.dt_effective;
  out.trajectory.norm_stats = warmup.norm_stats;
  const auto d = static_cast<Eigen::Index>(m.w_out.rows());
  out.trajectory.data.resize(static_cast<Eigen::Index>(horizon), d);
  if (horizon == 0) return out;

  Eigen::VectorXd r = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.size()));
  for (Eigen::Index t = 0; t < warmup.data.rows(); ++t) r = advance(m, r, warmup.data.row(t).transpose());
  for (std::size_t k = 0; k < horizon; ++k) {
    Eigen::VectorXd o = m.w_out * r;
    if (!o.allFinite() || o.cwiseAbs().maxCoeff() > kDivergenceLimit) {
      if (!out.truncated) {
        out.truncated = true;
        out.divergence_step = k;
      }
      for (Eigen::Index j = 0; j < o.size(); ++j) {
        o(j) = std::isfinite(o(j)) ? std::clamp(o(j), -kDivergenceLimit, kDivergenceLimit) : kDivergenceLimit;
      }
    }
    out.trajectory.data.row(static_cast<Eigen::Index>(k)) = o.transpose();
    r = advance(m, r, o);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint mapping; A is stored as (row, col, value) triplets.

[[nodiscard]] inline io::Checkpoint to_checkpoint(const ReservoirModel& m) {
  io::Checkpoint c;
  const auto& k = m.config;
  c.attributes["kind"] = "reservoir";
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  c.attributes["size"] = std::to_string(k.size);
  c.attributes["leak"] = num(k.leak);
  c.attributes["ridge"] = num(k.ridge);
  c.attributes["input_scale"] = num(k.input_scale);
  c.attributes["spectral_radius"] = num(k.spectral_radius);
  c.attributes["link_prob"] = num(k.link_prob);
  c.attributes["train_noise"] = num(k.train_noise);
  c.attributes["washout"] = std::to_string(k.washout);
  c.attributes["seed"] = std::to_string(k.seed);

  c.add("W_in", Tensor::from_matrix(m.w_in));
  Tensor triplets(Tensor::Shape{static_cast<std::size_t>(m.a.nonZeros()), 3});
  std::size_t row = 0;
  for (Eigen::Index i = 0; i < m.a.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(m.a, i); it; ++it, ++row) {
      triplets(row, 0) = static_cast<double>(it.row());
      triplets(row, 1) = static_cast<double>(it.col());
      triplets(row, 2) = it.value();
    }
  }
  c.add("A", std::move(triplets));
  c.add("W_out", Tensor::from_matrix(m.w_out));
  return c;
}

[[nodiscard]] inline ReservoirModel reservoir_from_checkpoint(const io::Checkpoint& c) {
  if (c.attribute("kind") != "reservoir") throw FormatError("checkpoint is not a reservoir model");
  ReservoirModel m;
  auto& k = m.config;
  k.size = std::stoull(c.attribute("size"));
  k.leak = std::stod(c.attribute("leak"));
  k.ridge = std::stod(c.attribute("ridge"));
  k.input_scale = std::stod(c.attribute("input_scale"));
  k.spectral_radius = std::stod(c.attribute("spectral_radius"));
  k.link_prob = std::stod(c.attribute("link_prob"));
  k.train_noise = std::stod(c.attribute("train_noise"));
  k.washout = std::stoull(c.attribute("washout"));
  k.seed = std::stoull(c.attribute("seed"));
  m.w_in = c.at("W_in").matrix();
  const auto n = static_cast<Eigen::Index>(k.size);
  if (m.w_in.rows() != n) throw FormatError("reservoir checkpoint: W_in rows do not match size");
  const Tensor& t = c.at("A");
  std::vector<Eigen::Triplet<double>> entries;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const auto r = static_cast<Eigen::Index>(t(i, 0)), col = static_cast<Eigen::Index>(t(i, 1));
    if (r < 0 || r >= n || col < 0 || col >= n) throw FormatError("reservoir checkpoint: A index out of range");
    entries.emplace_back(r, col, t(i, 2));
  }
  m.a.resize(n, n);
  m.a.setFromTriplets(entries.begin(), entries.end());
  m.a.makeCompressed();
  const Tensor& w_out = c.at("W_out");
  if (!w_out.empty()) m.w_out = w_out.matrix();
  return m;
}

}  // namespace chronoweft
