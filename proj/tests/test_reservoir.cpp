#include <gtest/gtest.h>

#include <cmath>

#include "chronoweft/reservoir.hpp"

using namespace chronoweft;

namespace {

ReservoirConfig small(std::uint64_t seed = 1) {
  ReservoirConfig c;
  c.size = 40;
  c.link_prob = 0.2;
  c.spectral_radius = 0.9;
  c.washout = 20;
  c.seed = seed;
  return c;
}

// Gelfand's formula ||A^k||^(1/k); converges like 1/k, so only a rough check.
double gelfand_radius(const Eigen::MatrixXd& a, int k = 4096) {
  Eigen::MatrixXd p = a;
  double log_scale = 0.0;
  for (int i = 1; i < k; ++i) {
    p = p * a;
    const double n = p.norm();
    p /= n;
    log_scale += std::log(n);
  }
  return std::exp((log_scale + std::log(p.norm())) / k);
}

TrajectoryMatrix sine_segment(std::size_t rows, double phase) {
  TrajectoryMatrix t;
  t.data.resize(Eigen::Index(rows), 2);
  for (std::size_t i = 0; i < rows; ++i) {
    t.data(Eigen::Index(i), 0) = 0.5 + 0.4 * std::sin(0.2 * double(i) + phase);
    t.data(Eigen::Index(i), 1) = 0.5 + 0.4 * std::cos(0.2 * double(i) + phase);
  }
  t.dt_effective = 0.1;
  return t;
}

}  // namespace

TEST(Init, DeterministicPerSeed) {
  const auto a = init_reservoir(small(3), 3), b = init_reservoir(small(3), 3), c = init_reservoir(small(4), 3);
  EXPECT_TRUE(a.w_in == b.w_in);
  EXPECT_TRUE(Eigen::MatrixXd(a.a) == Eigen::MatrixXd(b.a));
  EXPECT_FALSE(a.w_in == c.w_in);
}

TEST(Init, InputWeightsWithinScale) {
  auto cfg = small();
  cfg.input_scale = 0.37;
  const auto m = init_reservoir(cfg, 3);
  EXPECT_LE(m.w_in.cwiseAbs().maxCoeff(), 0.37);
  EXPECT_EQ(m.w_in.rows(), 40);
  EXPECT_EQ(m.w_in.cols(), 3);
}

TEST(Init, SpectralRadiusMatchesIndependentEstimate) {
  for (double rho : {0.5, 0.9, 1.3}) {
    auto cfg = small(7);
    cfg.spectral_radius = rho;
    const auto m = init_reservoir(cfg, 3);
    const Eigen::MatrixXd a(m.a);
    EXPECT_NEAR(spectral_radius(a), rho, 1e-9);
    // Complex Schur route, then confirm the top eigenvalue really is one:
    // A - lambda I must be singular.
    Eigen::ComplexEigenSolver<Eigen::MatrixXd> ces(a, false);
    Eigen::Index top = 0;
    EXPECT_NEAR(ces.eigenvalues().cwiseAbs().maxCoeff(&top), rho, 1e-6);
    const Eigen::MatrixXcd shifted = a.cast<std::complex<double>>() -
                                     ces.eigenvalues()(top) * Eigen::MatrixXcd::Identity(a.rows(), a.cols());
    EXPECT_LT(Eigen::JacobiSVD<Eigen::MatrixXcd>(shifted).singularValues().minCoeff(), 1e-8);
    EXPECT_NEAR(gelfand_radius(a), rho, 2e-3 * rho);
  }
}

TEST(Init, FullLinkProbabilityGivesDenseMatrix) {
  auto cfg = small();
  cfg.size = 2;
  cfg.link_prob = 1.0;
  EXPECT_EQ(init_reservoir(cfg, 1).a.nonZeros(), 4);
}

TEST(Init, EmptyRecurrenceIsDegenerate) {
  auto cfg = small();
  cfg.link_prob = 0.0;
  EXPECT_THROW((void)init_reservoir(cfg, 3), DegenerateReservoirError);
  cfg.link_prob = 0.1;
  cfg.leak = 0.0;
  EXPECT_THROW((void)init_reservoir(cfg, 3), ValidationError);
}

TEST(SpectralProperty, ScalesLinearly) {
  Rng rng = make_rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXd a(15, 15);
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = standard_normal(rng);
    const double c = 4.0 * uniform01(rng) - 2.0;
    EXPECT_NEAR(spectral_radius(c * a), std::abs(c) * spectral_radius(a), 1e-9 * spectral_radius(a));
  }
}

TEST(Advance, FrozenAndZeroCases) {
  auto m = init_reservoir(small(), 2);
  const Eigen::VectorXd r = Eigen::VectorXd::LinSpaced(40, -0.5, 0.5);
  const Eigen::VectorXd in = Eigen::VectorXd::Constant(2, 3.0);
  m.config.leak = 0.0;
  EXPECT_TRUE(advance(m, r, in) == r);
  m.config.leak = 1.0;
  m.a.setZero();
  m.w_in.setZero();
  EXPECT_TRUE(advance(m, r, in).isZero(0.0));
}

TEST(Advance, SaturatesTowardOne) {
  auto m = init_reservoir(small(), 1);
  m.config.leak = 1.0;
  m.a.setZero();
  m.w_in.setConstant(1.0);
  const Eigen::VectorXd r = advance(m, Eigen::VectorXd::Zero(40), Eigen::VectorXd::Constant(1, 50.0));
  EXPECT_GT(r.minCoeff(), 1.0 - 1e-12);
  EXPECT_LE(r.maxCoeff(), 1.0);
}

TEST(Ridge, ScalarCases) {
  const Eigen::MatrixXd r = Eigen::MatrixXd::Constant(1, 1, 1.0), u = Eigen::MatrixXd::Constant(1, 1, 2.0);
  EXPECT_DOUBLE_EQ(ridge_readout(r, u, 0.0)(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(ridge_readout(r, u, 1.0)(0, 0), 1.0);
}

TEST(Ridge, MatchesDenseInverseOracle) {
  Rng rng = make_rng(5);
  Eigen::MatrixXd r(20, 200), u(3, 200);
  for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = standard_normal(rng);
  for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = standard_normal(rng);
  const double beta = 1e-3;
  const Eigen::MatrixXd oracle =
      u * r.transpose() * (r * r.transpose() + beta * Eigen::MatrixXd::Identity(20, 20)).inverse();
  const Eigen::MatrixXd w = ridge_readout(r, u, beta);
  EXPECT_LT((w - oracle).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(RidgeProperty, NormalEquationResidual) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng = make_rng(seed);
    Eigen::MatrixXd r(30, 120), u(3, 120);
    for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = std::tanh(standard_normal(rng));
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = uniform01(rng);
    const double beta = std::pow(10.0, -6.0 + 5.0 * uniform01(rng));
    const Eigen::MatrixXd w = ridge_readout(r, u, beta);
    const Eigen::MatrixXd lhs = w * (r * r.transpose() + beta * Eigen::MatrixXd::Identity(30, 30));
    EXPECT_LT((lhs - u * r.transpose()).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Ridge, SingularWithoutRegularization) {
  const Eigen::MatrixXd r = Eigen::MatrixXd::Ones(3, 10), u = Eigen::MatrixXd::Ones(1, 10);
  EXPECT_THROW((void)ridge_readout(r, u, 0.0), RegularizationError);
  EXPECT_NO_THROW((void)ridge_readout(r, u, 1e-3));
  EXPECT_THROW((void)ridge_readout(r, Eigen::MatrixXd::Ones(1, 9), 1.0), DimensionError);
  EXPECT_THROW((void)ridge_readout(Eigen::MatrixXd(3, 0), Eigen::MatrixXd(1, 0), 1.0), InsufficientDataError);
}

TEST(Training, ConstantSignalIsAFixedPoint) {
  TrajectoryMatrix seg;
  seg.data = Matrix::Constant(400, 2, 0.5);
  const auto m = train_on_segments({seg}, small());
  const auto p = closed_loop_predict(m, seg.segment(0, 50), 300);
  EXPECT_FALSE(p.truncated);
  EXPECT_LT((p.trajectory.data.array() - 0.5).abs().maxCoeff(), 1e-3);
}

TEST(Training, LearnsPeriodicSignal) {
  auto cfg = small(9);
  cfg.size = 100;
  cfg.ridge = 1e-8;
  const auto m = train_on_segments({sine_segment(600, 0.0), sine_segment(600, 1.0)}, cfg);
  const auto truth = sine_segment(260, 2.0);
  const auto p = closed_loop_predict(m, truth.segment(0, 200), 60);
  EXPECT_LT((p.trajectory.data - truth.data.bottomRows(60)).cwiseAbs().maxCoeff(), 0.05);
}

TEST(Training, DeterministicPerSeed) {
  auto cfg = small(4);
  cfg.train_noise = 1e-3;
  const std::vector<TrajectoryMatrix> segs{sine_segment(200, 0.0), sine_segment(200, 1.0)};
  EXPECT_TRUE(train_on_segments(segs, cfg).w_out == train_on_segments(segs, cfg).w_out);
}

TEST(TrainingProperty, SegmentOrderDoesNotMatterWithoutNoise) {
  const auto a = sine_segment(200, 0.0), b = sine_segment(250, 1.3), c = sine_segment(180, 2.1);
  auto cfg = small();
  cfg.ridge = 1e-3;  // keeps the Gram matrix well conditioned, so summation order is all that differs
  const auto w1 = train_on_segments({a, b, c}, cfg).w_out;
  const auto w2 = train_on_segments({c, a, b}, cfg).w_out;
  EXPECT_LT((w1 - w2).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, w1.cwiseAbs().maxCoeff()));
}

// Duplicating a segment doubles R R^T and U R^T, which is the single-segment
// fit at half the ridge: W_out changes, but predictably.
TEST(Training, DuplicateSegmentEqualsHalvedRidge) {
  auto cfg = small(2);
  cfg.ridge = 1e-4;
  const auto seg = sine_segment(300, 0.4);
  const auto dup = train_on_segments({seg, seg}, cfg).w_out;
  const auto single = train_on_segments({seg}, cfg).w_out;
  cfg.ridge /= 2;
  const auto halved = train_on_segments({seg}, cfg).w_out;
  EXPECT_GT((dup - single).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((dup - halved).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, halved.cwiseAbs().maxCoeff()));
}

TEST(Training, RejectsShortOrMismatchedSegments) {
  EXPECT_THROW((void)train_on_segments({}, small()), InsufficientDataError);
  EXPECT_THROW((void)train_on_segments({sine_segment(21, 0)}, small()), InsufficientDataError);
  TrajectoryMatrix three;
  three.data = Matrix::Zero(100, 3);
  EXPECT_THROW((void)train_on_segments({sine_segment(100, 0), three}, small()), DimensionError);
}

TEST(Prediction, ZeroHorizonAndDeterminism) {
  const auto m = train_on_segments({sine_segment(200, 0)}, small());
  const auto w = sine_segment(40, 0.5);
  EXPECT_EQ(closed_loop_predict(m, w, 0).trajectory.data.rows(), 0);
  EXPECT_TRUE(closed_loop_predict(m, w, 30).trajectory.data == closed_loop_predict(m, w, 30).trajectory.data);
  EXPECT_EQ(closed_loop_predict(m, w, 30).trajectory.dt_effective, 0.1);
  EXPECT_THROW((void)closed_loop_predict(m, sine_segment(10, 0), 5), InsufficientDataError);
  EXPECT_THROW((void)closed_loop_predict(init_reservoir(small(), 2), w, 5), ValidationError);
}

TEST(Prediction, DivergenceIsClippedAndFlagged) {
  auto m = train_on_segments({sine_segment(200, 0)}, small());
  m.w_out *= 1e3;
  const auto p = closed_loop_predict(m, sine_segment(40, 0), 20);
  EXPECT_TRUE(p.truncated);
  EXPECT_LE(p.trajectory.data.cwiseAbs().maxCoeff(), kDivergenceLimit);
}

TEST(EchoStateProperty, StatesForgetInitialConditions) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ReservoirConfig cfg;
    cfg.size = 300;
    cfg.spectral_radius = 0.9;
    cfg.seed = seed;
    const auto m = init_reservoir(cfg, 3);
    Rng rng = make_rng(derive_seed(seed, "echo"));
    Eigen::VectorXd r1(300), r2(300);
    for (Eigen::Index i = 0; i < 300; ++i) r1(i) = 2 * uniform01(rng) - 1, r2(i) = 2 * uniform01(rng) - 1;
    for (int t = 0; t < 1000; ++t) {
      Eigen::VectorXd in(3);
      for (Eigen::Index j = 0; j < 3; ++j) in(j) = uniform01(rng);
      r1 = advance(m, r1, in);
      r2 = advance(m, r2, in);
    }
    EXPECT_LT((r1 - r2).norm(), 1e-6) << "seed " << seed;
  }
}

TEST(Checkpoint, RoundTripStoresSparseTriplets) {
  auto cfg = small(8);
  cfg.train_noise = 1e-3;
  const auto m = train_on_segments({sine_segment(200, 0)}, cfg);
  const auto c = to_checkpoint(m);
  EXPECT_EQ(c.at("A").rows(), std::size_t(m.a.nonZeros()));
  EXPECT_EQ(c.at("A").cols(), 3u);
  const auto back = reservoir_from_checkpoint(io::decode_checkpoint(io::encode_checkpoint(c)));
  EXPECT_EQ(back.config, m.config);
  EXPECT_TRUE(back.w_in == m.w_in);
  EXPECT_TRUE(back.w_out == m.w_out);
  EXPECT_TRUE(Eigen::MatrixXd(back.a) == Eigen::MatrixXd(m.a));
  const auto w = sine_segment(40, 0.5);
  EXPECT_TRUE(closed_loop_predict(back, w, 25).trajectory.data == closed_loop_predict(m, w, 25).trajectory.data);
}

TEST(Checkpoint, UntrainedModelRoundTrips) {
  const auto m = init_reservoir(small(), 2);
  const auto back = reservoir_from_checkpoint(to_checkpoint(m));
  EXPECT_FALSE(back.trained());
  EXPECT_TRUE(back.w_in == m.w_in);
}

TEST(Checkpoint, OutOfRangeTripletRejected) {
  auto c = to_checkpoint(init_reservoir(small(), 2));
  auto& a = c.tensors[1].second;
  a(0, 0) = 40.0;
  EXPECT_THROW((void)reservoir_from_checkpoint(c), FormatError);
}

TEST(Presets, KnownSystemsOnly) {
  EXPECT_DOUBLE_EQ(ReservoirConfig::preset("food_chain").leak, 0.36);
  EXPECT_NEAR(ReservoirConfig::preset("lorenz").ridge, std::pow(10.0, -5.15), 1e-20);
  EXPECT_THROW((void)ReservoirConfig::preset("sprott_3"), ValidationError);
}
