#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "chronoweft/dynsys.hpp"

using namespace chronoweft;

namespace {

// Independent fixed-step RK4, written against plain arrays.
template <class F>
std::array<double, 3> rk4_oracle(F f, std::array<double, 3> x, double dt, int steps) {
  for (int s = 0; s < steps; ++s) {
    std::array<double, 3> k1 = f(x), x2, x3, x4;
    for (int i = 0; i < 3; ++i) x2[i] = x[i] + 0.5 * dt * k1[i];
    std::array<double, 3> k2 = f(x2);
    for (int i = 0; i < 3; ++i) x3[i] = x[i] + 0.5 * dt * k2[i];
    std::array<double, 3> k3 = f(x3);
    for (int i = 0; i < 3; ++i) x4[i] = x[i] + dt * k3[i];
    std::array<double, 3> k4 = f(x4);
    for (int i = 0; i < 3; ++i) x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return x;
}

double decay_error(double dt) {
  auto field = [](std::span<const double> x, double, std::span<double> dx) { dx[0] = -x[0]; };
  std::vector<double> x{1.0};
  const int n = static_cast<int>(std::lround(1.0 / dt));
  for (int i = 0; i < n; ++i) x = rk4_step(field, x, i * dt, dt);
  return std::abs(x[0] - std::exp(-1.0));
}

using Field3 = std::function<std::array<double, 3>(const std::array<double, 3>&)>;

// Direct transcription of the source tables (Sprott 6/7: case G/H, see notes).
std::map<std::string, Field3> table_fields() {
  std::map<std::string, Field3> m;
  m["aizawa"] = [](const auto& v) {
    const double a = 0.95, b = 0.7, c = 0.6, d = 3.5, e = 0.25, f = 0.1, x = v[0], y = v[1], z = v[2];
    return std::array<double, 3>{(z - b) * x - d * y, d * x + (z - b) * y,
                                 c + a * z - z * z * z / 3 - (x * x + y * y) * (1 + e * z) + f * z * x * x * x};
  };
  m["bouali"] = [](const auto& v) {
    const double al = 0.3, be = 0.05, a = 4, b = 1, c = 1.5, s = 1, x = v[0], y = v[1], z = v[2];
    return std::array<double, 3>{x * (a - y) + al * z, -y * (b - x * x), -x * (c - s * z) - be * z};
  };
  m["chua"] = [](const auto& v) {
    const double al = 15.6, g = 1, be = 28, m0 = -1.143, m1 = -0.714, x = v[0], y = v[1], z = v[2];
    const double ht = m1 * x + 0.5 * (m0 - m1) * (std::abs(x + 1) - std::abs(x - 1));
    return std::array<double, 3>{al * (y - x - ht), g * (x - y + z), -be * y};
  };
  m["dadras"] = [](const auto& v) {
    const double a = 3, b = 2.7, c = 1.7, d = 2, e = 9, x = v[0], y = v[1], z = v[2];
    return std::array<double, 3>{y - a * x + b * y * z, c * y - x * z + z, d * x * y - e * z};
  };
  m["four_wing"] = [](const auto& v) {
    const double a = 0.2, b = 0.01, c = -0.4, x = v[0], y = v[1], z = v[2];
    return std::array<double, 3>{a * x + y * z, b * x + c * y - x * z, -z - x * y};
  };
  m["hastings_powell"] = [](const auto& v) {
    const double a1 = 5, a2 = 0.1, b1 = 3, b2 = 2, d1 = 0.4, d2 = 0.01, V = v[0], H = v[1], P = v[2];
    return std::array<double, 3>{V * (1 - V) - a1 * V * H / (b1 * V + 1),
                                 a1 * V * H / (b1 * V + 1) - a2 * H * P / (b2 * H + 1) - d1 * H,
                                 a2 * H * P / (b2 * H + 1) - d2 * P};
  };
  m["rikitake"] = [](const auto& v) {
    const double mu = 2, a = 5, x = v[0], y = v[1], z = v[2];
    return std::array<double, 3>{-mu * x + z * y, -mu * y + x * (z - a), 1 - x * y};
  };
  m["rossler"] = [](const auto& v) {
    const double a = 0.2, b = 0.2, c = 5.7, x = v[0], y = v[1], z = v[2];
    return std::array<double, 3>{-(y + z), x + a * y, b + z * (x - c)};
  };
  m["wang"] = [](const auto& v) {
    const double a = 3, x = v[0], y = v[1], z = v[2];
    return std::array<double, 3>{x - y * z, x - y + x * z, -a * z + x * y};
  };
  using A = std::array<double, 3>;
  m["sprott_0"] = [](const A& v) { return A{v[1], -v[0] + v[1] * v[2], 1 - v[1] * v[1]}; };
  m["sprott_1"] = [](const A& v) { return A{v[1] * v[2], v[0] - v[1], 1 - v[0] * v[1]}; };
  m["sprott_2"] = [](const A& v) { return A{v[1] * v[2], v[0] - v[1], 1 - v[0] * v[0]}; };
  m["sprott_3"] = [](const A& v) { return A{-v[1], v[0] + v[2], v[0] * v[2] + 3 * v[1] * v[1]}; };
  m["sprott_4"] = [](const A& v) { return A{v[1] * v[2], v[0] * v[0] - v[1], 1 - 4 * v[0]}; };
  m["sprott_5"] = [](const A& v) { return A{v[1] + v[2], -v[0] + 0.5 * v[1], v[0] * v[0] - v[2]}; };
  m["sprott_6"] = [](const A& v) { return A{0.4 * v[0] + v[2], v[0] * v[2] - v[1], -v[0] + v[1]}; };
  m["sprott_7"] = [](const A& v) { return A{-v[1] + v[2] * v[2], v[0] + 0.5 * v[1], v[0] - v[2]}; };
  m["sprott_8"] = [](const A& v) { return A{-0.2 * v[1], v[0] + v[2], v[0] + v[1] * v[1] - v[2]}; };
  m["sprott_9"] = [](const A& v) { return A{2 * v[2], -2 * v[1] + v[2], -v[0] + v[1] + v[1] * v[1]}; };
  m["sprott_10"] = [](const A& v) { return A{v[0] * v[1] - v[2], v[0] - v[1], v[0] + 0.3 * v[2]}; };
  m["sprott_11"] = [](const A& v) { return A{v[1] + 3.9 * v[2], 0.9 * v[0] * v[0] - v[1], 1 - v[0]}; };
  m["sprott_12"] = [](const A& v) { return A{-v[2], -v[0] * v[0] - v[1], 1.7 + 1.7 * v[0] + v[1]}; };
  m["sprott_13"] = [](const A& v) { return A{-2 * v[1], v[0] + v[2] * v[2], 1 + v[1] - 2 * v[2]}; };
  m["sprott_14"] = [](const A& v) { return A{v[1], v[0] - v[2], v[0] + v[0] * v[2] + 2.7 * v[1]}; };
  m["sprott_15"] = [](const A& v) { return A{2.7 * v[1] + v[2], -v[0] + v[1] * v[1], v[0] + v[1]}; };
  m["sprott_16"] = [](const A& v) { return A{-v[2], v[0] - v[1], 3.1 * v[0] + v[1] * v[1] + 0.5 * v[2]}; };
  m["sprott_17"] = [](const A& v) { return A{0.9 - v[1], 0.4 + v[2], v[0] * v[1] - v[2]}; };
  m["sprott_18"] = [](const A& v) { return A{-v[0] - 4 * v[1], v[0] + v[2] * v[2], 1 + v[0]}; };
  m["lorenz"] = [](const A& v) {
    return A{10 * (v[1] - v[0]), v[0] * (28 - v[2]) - v[1], v[0] * v[1] - 8.0 / 3.0 * v[2]};
  };
  m["food_chain"] = [](const A& v) {
    const double K = 0.99, xc = 0.4, yc = 2.009, xp = 0.08, yp = 2.876, R0 = 0.16129, C0 = 0.5;
    const double R = v[0], C = v[1], P = v[2];
    return A{R * (1 - R / K) - xc * yc * C * R / (R + R0), xc * C * (yc * R / (R + R0) - 1) - xp * yp * P * C / (C + C0),
             xp * P * (yp * C / (C + C0) - 1)};
  };
  return m;
}

}  // namespace

TEST(Rk4, ConstantFieldLeavesStateUnchanged) {
  auto zero = [](std::span<const double>, double, std::span<double> dx) { dx[0] = 0.0; };
  EXPECT_EQ(rk4_step(zero, std::vector<double>{5.0}, 0.0, 0.01)[0], 5.0);
}

TEST(Rk4, DecayMatchesExponential) {
  auto field = [](std::span<const double> x, double, std::span<double> dx) { dx[0] = -x[0]; };
  EXPECT_NEAR(rk4_step(field, std::vector<double>{1.0}, 0.0, 0.01)[0], std::exp(-0.01), 1e-10);
}

TEST(Rk4, PureDriftIsExact) {
  auto drift = [](std::span<const double>, double, std::span<double> dx) { dx[0] = 1.0; };
  EXPECT_DOUBLE_EQ(rk4_step(drift, std::vector<double>{0.0}, 0.0, 0.1)[0], 0.1);
}

TEST(Rk4, FourthOrderConvergence) {
  const double e1 = decay_error(0.02), e2 = decay_error(0.01), e3 = decay_error(0.005);
  EXPECT_GE(e1 / e2, 12.0);
  EXPECT_GE(e2 / e3, 12.0);
}

TEST(Simulate, SprottZeroMatchesIndependentOracle) {
  const SystemSpec s = find_system("sprott_0");
  const std::vector<double> x0{0.1, 0.1, 0.1};
  const RawTrajectory raw = simulate(s, x0, 10, 0.01);
  auto f = [](const std::array<double, 3>& v) {
    return std::array<double, 3>{v[1], -v[0] + v[1] * v[2], 1 - v[1] * v[1]};
  };
  for (int k = 1; k <= 10; ++k) {
    const auto want = rk4_oracle(f, {0.1, 0.1, 0.1}, 0.01, k);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(raw.data(k - 1, i), want[i], 1e-12);
  }
}

TEST(Simulate, LorenzStaysBounded) {
  const RawTrajectory raw = simulate(find_system("lorenz"), 100'000, 0.01, 3);
  EXPECT_LT(raw.data.cwiseAbs().maxCoeff(), 100.0);
}

TEST(Simulate, ZeroStepsGivesEmptyTrajectory) {
  const std::vector<double> x0{0.1, 0.2, 0.3};
  const RawTrajectory raw = simulate(find_system("lorenz"), x0, 0, 0.01, 0, 2.5);
  EXPECT_EQ(raw.length(), 0u);
  EXPECT_EQ(raw.t0, 2.5);
}

TEST(Simulate, Deterministic) {
  const auto a = simulate(find_system("rossler"), 2000, 0.01, 11);
  const auto b = simulate(find_system("rossler"), 2000, 0.01, 11);
  EXPECT_TRUE(a.data == b.data);
}

TEST(Simulate, WrongStateSizeIsRejected) {
  const std::vector<double> x0{0.1, 0.2};
  EXPECT_THROW((void)simulate(find_system("lorenz"), x0, 10), ValidationError);
}

TEST(Simulate, DivergenceIsReported) {
  SystemSpec blowup = find_system("lorenz");
  blowup.field = [](std::span<const double>, std::span<const double> x, double, std::span<double> dx) {
    for (std::size_t i = 0; i < 3; ++i) dx[i] = x[i] * x[i];
  };
  const std::vector<double> x0{1.0, 1.0, 1.0};
  EXPECT_THROW((void)simulate(blowup, x0, 10'000), DivergenceError);
}

TEST(Preprocess, CutSubsampleNormalize) {
  RawTrajectory raw;
  raw.data.resize(5, 1);
  raw.data << 0, 5, 10, 15, 20;
  const TrajectoryMatrix t = preprocess(raw, 1, 2);
  ASSERT_EQ(t.length(), 2u);
  EXPECT_EQ(t.data(0, 0), 0.0);
  EXPECT_EQ(t.data(1, 0), 1.0);
  EXPECT_EQ(t.norm_stats.min[0], 5.0);
  EXPECT_EQ(t.norm_stats.max[0], 15.0);
  EXPECT_DOUBLE_EQ(t.dt_effective, 0.02);
}

TEST(Preprocess, LotkaVolterraProjectsToThree) {
  const auto raw = simulate(find_system("lotka_volterra"), 20'000, 0.01, 1);
  EXPECT_EQ(raw.data.cols(), 4);
  EXPECT_EQ(preprocess(raw, 5000, 10).dims(), 3u);
}

TEST(Preprocess, IdempotentOnNormalizedData) {
  const auto t = preprocess(simulate(find_system("lorenz"), 5000, 0.01, 2), 1000, 1);
  RawTrajectory again;
  again.data = t.data;
  EXPECT_TRUE(preprocess(again, 0, 1).data.isApprox(t.data, 1e-15));
}

TEST(Preprocess, ConstantColumnIsDegenerate) {
  RawTrajectory raw;
  raw.data = Matrix::Ones(10, 2);
  EXPECT_THROW((void)preprocess(raw, 0, 1), DegenerateNormalizationError);
}

TEST(Preprocess, TransientLongerThanRunIsRejected) {
  RawTrajectory raw;
  raw.data = Matrix::Random(10, 3);
  EXPECT_THROW((void)preprocess(raw, 10, 1), ValidationError);
}

TEST(Catalog, HasThirtyOneSystems) {
  const auto c = catalog();
  EXPECT_EQ(c.size(), 31u);
  std::set<std::string> names;
  for (const auto& s : c) names.insert(s.name);
  EXPECT_EQ(names.size(), 31u);
  for (const auto& t : target_system_names()) EXPECT_TRUE(names.count(t));
}

TEST(Catalog, RikitakeParameters) {
  const auto s = find_system("Rikitake");
  EXPECT_EQ(s.param("mu"), 2.0);
  EXPECT_EQ(s.param("a"), 5.0);
}

TEST(Catalog, SprottFiveVanishesAtOrigin) {
  const auto dx = find_system("Sprott_5").evaluate(std::vector<double>{0, 0, 0});
  for (double v : dx) EXPECT_EQ(v, 0.0);
}

TEST(Catalog, LorenzKeepsLiteralParameterSet) {
  const auto lit = find_system("lorenz").with_parameter_set("literal");
  EXPECT_EQ(lit.param("rho"), 2.67);
  EXPECT_EQ(lit.param("beta"), 26.0);
  EXPECT_THROW((void)find_system("lorenz").with_parameter_set("missing"), ValidationError);
}

TEST(Catalog, UnknownNameIsRejected) { EXPECT_THROW((void)find_system("lorenz96"), ValidationError); }

// Every 3-D field against its table transcription at random points.
TEST(CatalogProperty, FieldsMatchTableTranscription) {
  const auto oracle = table_fields();
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::size_t checked = 0;
  for (const auto& spec : catalog()) {
    if (spec.dim != 3) continue;
    ASSERT_TRUE(oracle.count(spec.name)) << spec.name;
    for (int k = 0; k < 100; ++k) {
      const std::array<double, 3> x{u(rng), u(rng), u(rng)};
      const auto want = oracle.at(spec.name)(x);
      const auto got = spec.evaluate(std::vector<double>(x.begin(), x.end()));
      for (int i = 0; i < 3; ++i) EXPECT_NEAR(got[i], want[i], 1e-14) << spec.name;
    }
    ++checked;
  }
  EXPECT_EQ(checked, 30u);
}

TEST(CatalogProperty, LotkaVolterraMatchesMatrixForm) {
  const auto spec = find_system("lotka_volterra");
  const double r[4] = {1, 0.72, 1.53, 1.27};
  const double a[4][4] = {{1, 1.09, 1.52, 0}, {0, 1, 0.44, 1.36}, {2.33, 0, 1, 0.47}, {1.21, 0.51, 0.35, 1}};
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> x{u(rng), u(rng), u(rng), u(rng)};
    const auto got = spec.evaluate(x);
    for (int i = 0; i < 4; ++i) {
      double s = 0;
      for (int j = 0; j < 4; ++j) s += a[i][j] * x[j];
      EXPECT_NEAR(got[i], r[i] * x[i] * (1 - s), 1e-14);
    }
  }
}

// Every system, from a random start in its box, stays bounded and yields a
// normalized trajectory with exact [0, 1] extremes.
TEST(CatalogProperty, EverySystemPreprocessesCleanly) {
  for (const auto& spec : catalog()) {
    const std::size_t stride = spec.sampling_stride();
    const auto t = preprocess(simulate(spec, kDefaultTransientSteps + 2000 * stride, kDefaultDt, 5),
                              kDefaultTransientSteps, stride);
    ASSERT_TRUE(t.data.allFinite()) << spec.name;
    for (Eigen::Index j = 0; j < t.data.cols(); ++j) {
      EXPECT_NEAR(t.data.col(j).minCoeff(), 0.0, 1e-12) << spec.name;
      EXPECT_NEAR(t.data.col(j).maxCoeff(), 1.0, 1e-12) << spec.name;
    }
  }
}

TEST(Sampling, StrideFollowsPeriod) {
  SystemSpec s;
  s.typical_period = 0.75;
  EXPECT_EQ(s.sampling_stride(50.0, 0.01), 2u);
  s.typical_period = 0.1;
  EXPECT_EQ(s.sampling_stride(50.0, 0.01), 1u);
  s.typical_period = 0.0;
  EXPECT_EQ(s.sampling_stride(), kDefaultSubsample);
}

// The period table should agree with a fresh measurement: mean interval
// between upward crossings of the mean, on the coordinate that crosses most,
// taken as the median over 12 starts.
TEST(SamplingProperty, PeriodTableMatchesMeasurement) {
  for (const char* name : {"lorenz", "rossler", "sprott_0", "food_chain"}) {
    const auto spec = find_system(name);
    const double dt = 0.01;
    const std::size_t steps = static_cast<std::size_t>(std::ceil(300.0 * spec.typical_period / dt));
    std::vector<double> periods;
    for (std::uint64_t seed = 200; seed < 212; ++seed) {
      const auto raw = simulate(spec, kDefaultTransientSteps + steps, dt, seed);
      double best_period = 0.0;
      std::size_t best_count = 0;
      for (Eigen::Index j = 0; j < raw.data.cols(); ++j) {
        const auto col = raw.data.col(j).tail(static_cast<Eigen::Index>(steps));
        const double m = col.mean();
        std::vector<Eigen::Index> ups;
        for (Eigen::Index i = 1; i < col.size(); ++i) {
          if (col(i - 1) < m && col(i) >= m) ups.push_back(i);
        }
        if (ups.size() > best_count && ups.size() > 1) {
          best_count = ups.size();
          best_period = static_cast<double>(ups.back() - ups.front()) * dt / static_cast<double>(ups.size() - 1);
        }
      }
      periods.push_back(best_period);
    }
    std::sort(periods.begin(), periods.end());
    const double med = 0.5 * (periods[5] + periods[6]);
    EXPECT_NEAR(med, spec.typical_period, 0.2 * spec.typical_period) << name;
  }
}
