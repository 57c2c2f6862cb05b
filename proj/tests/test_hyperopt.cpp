#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "chronoweft/hyperopt.hpp"

using namespace chronoweft;

namespace {

double bowl(const ParamSample& s, std::uint64_t) { return 1.0 + std::pow(s.number("x") - 0.3, 2); }

}  // namespace

TEST(Sample, SingletonCategorical) {
  SearchSpace sp;
  sp.categorical("heads", {"4"});
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = sample(sp, seed);
    EXPECT_EQ(s.text("heads"), "4");
    EXPECT_EQ(s.number("heads"), 4.0);
  }
}

TEST(Sample, SameSeedSameConfig) {
  SearchSpace sp;
  sp.linear("a", 0, 1).log10("b", 1e-6, 1e-2).integer("c", 1, 8).categorical("d", {"x", "y", "z"});
  const auto s1 = sample(sp, 7), s2 = sample(sp, 7), s3 = sample(sp, 8);
  EXPECT_EQ(s1.values, s2.values);
  EXPECT_NE(s1.values, s3.values);
}

TEST(Sample, ValuesStayInDomain) {
  SearchSpace sp;
  sp.linear("a", -1, 2).log10("b", 1e-3, 10).integer("c", -2, 2);
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const auto s = sample(sp, seed);
    EXPECT_GE(s.number("a"), -1.0);
    EXPECT_LE(s.number("a"), 2.0);
    EXPECT_GE(s.number("b"), 1e-3);
    EXPECT_LE(s.number("b"), 10.0);
    const auto c = std::get<std::int64_t>(s.at("c"));
    EXPECT_GE(c, -2);
    EXPECT_LE(c, 2);
  }
}

// Kolmogorov-Smirnov distance of the sampled exponents against U(-6, -2),
// evaluated on 40 buckets.
TEST(SampleProperty, LogDomainUniformInExponent) {
  SearchSpace sp;
  sp.log10("beta", 1e-6, 1e-2);
  const int n = 10'000, buckets = 40;
  std::vector<int> counts(buckets, 0);
  for (int i = 0; i < n; ++i) {
    const double e = std::log10(sample(sp, std::uint64_t(i)).number("beta"));
    ASSERT_GE(e, -6.0 - 1e-12);
    ASSERT_LE(e, -2.0 + 1e-12);
    counts[std::min(buckets - 1, int((e + 6.0) / 4.0 * buckets))]++;
  }
  double cdf = 0.0, ks = 0.0;
  for (int b = 0; b < buckets; ++b) {
    cdf += double(counts[std::size_t(b)]) / n;
    ks = std::max(ks, std::abs(cdf - double(b + 1) / buckets));
  }
  EXPECT_LT(ks, 1.63 / std::sqrt(double(n)));  // 1% critical value
}

TEST(Search, QuadraticBowlWithinFivePercent) {
  SearchSpace sp;
  sp.linear("x", -2, 2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = random_search(sp, 200, bowl, seed);
    EXPECT_LE(*r.best.objective, 1.05) << "seed " << seed;
  }
}

TEST(Search, SingleTrial) {
  SearchSpace sp;
  sp.linear("x", -2, 2);
  const auto r = random_search(sp, 1, bowl, 3);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.best.index, 0u);
  EXPECT_EQ(r.best.config.values, r.history[0].config.values);
  EXPECT_THROW((void)random_search(sp, 0, bowl, 3), ValidationError);
}

TEST(Search, FailedTrialsAreExcluded) {
  SearchSpace sp;
  sp.linear("x", -2, 2);
  std::size_t calls = 0;
  const auto r = random_search(
      sp, 40,
      [&](const ParamSample& s, std::uint64_t seed) {
        if (calls++ % 2 == 1) {
          if (calls % 4 == 0) throw NumericalError("diverged");
          return std::nan("");
        }
        return bowl(s, seed);
      },
      5);
  EXPECT_EQ(r.best.index % 2, 0u);
  for (const auto& t : r.history) {
    EXPECT_EQ(t.ok(), t.index % 2 == 0);
    if (!t.ok()) {
      EXPECT_FALSE(t.failure.empty());
    }
  }
  EXPECT_THROW((void)random_search(sp, 3, [](const ParamSample&, std::uint64_t) -> double { throw ValidationError("no"); }, 1),
               SearchExhaustedError);
}

TEST(SearchProperty, BestIsMinimumAndPrefixStable) {
  SearchSpace sp;
  sp.linear("x", -2, 2).log10("y", 1e-3, 1);
  auto f = [](const ParamSample& s, std::uint64_t) { return std::pow(s.number("x"), 2) + s.number("y"); };
  const auto full = random_search(sp, 100, f, 11);
  EXPECT_EQ(full.history.size(), 100u);
  double lo = 1e300;
  for (const auto& t : full.history) lo = std::min(lo, *t.objective);
  EXPECT_EQ(*full.best.objective, lo);
  double last = 1e300;
  for (std::size_t k : {1, 5, 20, 50, 100}) {
    const auto part = random_search(sp, k, f, 11);
    for (std::size_t i = 0; i < k; ++i) EXPECT_EQ(part.history[i].config.values, full.history[i].config.values);
    EXPECT_LE(*part.best.objective, last);
    last = *part.best.objective;
  }
}

TEST(Domain, Parsing) {
  const auto a = parse_domain("lr", "log10:1e-4:1e-2");
  EXPECT_EQ(a.kind, ParamDomain::Kind::log10);
  EXPECT_EQ(a.lo, 1e-4);
  const auto b = parse_domain("heads", "choice:1,2,4");
  EXPECT_EQ(b.choices, (std::vector<std::string>{"1", "2", "4"}));
  const auto c = parse_domain("blocks", "int:1:4");
  EXPECT_EQ(c.ilo, 1);
  EXPECT_EQ(c.ihi, 4);
  EXPECT_THROW((void)parse_domain("x", "linear:1"), ValidationError);
  EXPECT_THROW((void)parse_domain("x", "log10:0:1"), ValidationError);
  EXPECT_THROW((void)parse_domain("x", "linear:a:b"), ValidationError);
  EXPECT_THROW((void)parse_domain("x", "normal:0:1"), ValidationError);
  EXPECT_THROW((void)parse_domain("x", "int:5:1"), ValidationError);
  EXPECT_THROW(SearchSpace{}.validate(), ValidationError);
}
