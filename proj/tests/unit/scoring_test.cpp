#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <gtest/gtest.h>

#include "nngp/error.hpp"
#include "nngp/scoring.hpp"

using namespace nngp;

namespace {

// CRPS as the integral of F(x)^2 below y plus (1 - F(x))^2 above y, each
// half-line by double-exponential quadrature.
template <class Cdf, class Sf>
double crps_integral(Cdf cdf, Sf sf, double y) {
  boost::math::quadrature::exp_sinh<double> q;
  const double below = q.integrate([&](double t) { const double f = cdf(y - t); return f * f; });
  const double above = q.integrate([&](double t) { const double f = sf(y + t); return f * f; });
  return below + above;
}

}  // namespace

TEST(Crps, TwoPointEnsemble) {
  const std::vector<double> d{0.0, 2.0};
  EXPECT_NEAR(crps_samples(d, 1.0), 0.5, 1e-15);
  EXPECT_NEAR(crps_samples(d, 0.0), 1.0 - 0.5, 1e-15);
}

TEST(Crps, SamplesMatchPairwiseDefinition) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<double> d(57);
  for (auto& v : d) v = nd(rng);
  const double y = 0.3;
  double a = 0.0, b = 0.0;
  for (double x : d) a += std::abs(x - y);
  for (double x : d)
    for (double z : d) b += std::abs(x - z);
  const double n = static_cast<double>(d.size());
  EXPECT_NEAR(crps_samples(d, y), a / n - 0.5 * b / (n * n), 1e-12);
}

TEST(Crps, RequiresTwoDraws) {
  const std::vector<double> one{1.0};
  EXPECT_THROW(crps_samples(one, 0.0), Error);
}

TEST(Crps, GaussianClosedFormMatchesIntegral) {
  for (const auto& [mu, sigma, y] : std::vector<std::tuple<double, double, double>>{
           {0.0, 1.0, 0.0}, {1.0, 2.0, -1.5}, {-3.0, 0.5, -2.0}, {0.0, 1.0, 4.0}}) {
    boost::math::normal_distribution<double> n(mu, sigma);
    const double num = crps_integral([&](double x) { return boost::math::cdf(n, x); },
                                     [&](double x) { return boost::math::cdf(complement(n, x)); }, y);
    EXPECT_NEAR(crps_gaussian(mu, sigma, y), num, 1e-9) << mu << " " << sigma << " " << y;
  }
  // Standard normal at its mean: (sqrt(2) - 1) / sqrt(pi).
  EXPECT_NEAR(crps_gaussian(0.0, 1.0, 0.0), (std::numbers::sqrt2 - 1.0) / std::sqrt(std::numbers::pi), 1e-14);
}

TEST(Crps, StudentTClosedFormMatchesIntegral) {
  for (const auto& [loc, scale, dof, y] : std::vector<std::tuple<double, double, double, double>>{
           {0.0, 1.0, 3.0, 0.0}, {1.0, 2.0, 5.0, -1.0}, {0.5, 0.7, 30.0, 2.0}, {0.0, 1.0, 1.5, 1.0}}) {
    boost::math::students_t_distribution<double> t(dof);
    const double num =
        crps_integral([&](double x) { return boost::math::cdf(t, (x - loc) / scale); },
                      [&](double x) { return boost::math::cdf(complement(t, (x - loc) / scale)); }, y);
    EXPECT_NEAR(crps_student_t(loc, scale, dof, y), num, 1e-8) << dof;
  }
  EXPECT_THROW(crps_student_t(0.0, 1.0, 1.0, 0.0), Error);
  // E|X - y| for a Gaussian forecast bounds its CRPS.
  for (double y : {-1.0, 0.0, 0.4, 3.0}) {
    boost::math::normal_distribution<double> n(0.2, 1.3);
    boost::math::quadrature::exp_sinh<double> q;
    const double mae = q.integrate([&](double t) { return boost::math::cdf(n, y - t); }) +
                       q.integrate([&](double t) { return boost::math::cdf(complement(n, y + t)); });
    EXPECT_LE(crps_gaussian(0.2, 1.3, y), mae);
  }
  // Large dof approaches the Gaussian.
  EXPECT_NEAR(crps_student_t(0.3, 1.1, 1e6, 1.0), crps_gaussian(0.3, 1.1, 1.0), 1e-6);
}

TEST(Crps, SampleConvergesToGaussian) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(1.0, 2.0);
  std::vector<double> d(100000);
  for (auto& v : d) v = nd(rng);
  for (double y : {-2.0, 1.0, 3.5}) {
    const double exact = crps_gaussian(1.0, 2.0, y);
    EXPECT_LT(std::abs(crps_samples(d, y) - exact) / exact, 0.02) << y;
  }
}

TEST(Crps, NeverExceedsMeanAbsoluteError) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> d(25);
    for (auto& v : d) v = nd(rng);
    const double y = 2.0 * nd(rng);
    double mae = 0.0;
    for (double v : d) mae += std::abs(v - y);
    mae /= static_cast<double>(d.size());
    EXPECT_LE(crps_samples(d, y), mae + 1e-12);
    EXPECT_GE(crps_samples(d, y), 0.0);
  }
}

TEST(Quantile, Type7) {
  const std::vector<double> s{1.0, 2.0, 3.0, 4.0};
  EXPECT_DOUBLE_EQ(quantile_type7(s, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile_type7(s, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile_type7(s, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile_type7(s, 0.25), 1.75);
}

TEST(Summary, DrawsAndIntervals) {
  std::vector<double> d(1001);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<double>(i);
  std::shuffle(d.begin(), d.end(), std::mt19937_64(1));
  const PredictiveSummary s = summarize_draws(d);
  EXPECT_DOUBLE_EQ(s.mean, 500.0);
  EXPECT_DOUBLE_EQ(s.median, 500.0);
  EXPECT_DOUBLE_EQ(s.q025, 25.0);
  EXPECT_DOUBLE_EQ(s.q975, 975.0);

  const auto [lo, hi] = interval_95(Forecast{GaussianForecast{1.0, 2.0}});
  EXPECT_NEAR(lo, 1.0 - 1.959963984540054 * 2.0, 1e-9);
  EXPECT_NEAR(hi, 1.0 + 1.959963984540054 * 2.0, 1e-9);
  const auto [tlo, thi] = interval_95(Forecast{StudentTForecast{0.0, 1.0, 10.0}});
  EXPECT_NEAR(thi, 2.228138851986274, 1e-9);
  EXPECT_NEAR(tlo, -thi, 1e-12);
}

TEST(Summary, ScoreReport) {
  std::vector<Forecast> f{GaussianForecast{0.0, 1.0}, GaussianForecast{1.0, 1.0}, GaussianForecast{0.0, 0.1}};
  const std::vector<double> y{0.0, 2.0, 1.0};
  const ScoreReport r = summarize(f, y);
  EXPECT_EQ(r.n_holdout, 3u);
  EXPECT_NEAR(r.rmspe, std::sqrt((0.0 + 1.0 + 1.0) / 3.0), 1e-14);
  EXPECT_NEAR(r.pic_95, 100.0 * 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.piw_95, 2.0 * 1.959963984540054 * (1.0 + 1.0 + 0.1) / 3.0, 1e-9);
  const double c = (crps_gaussian(0, 1, 0) + crps_gaussian(1, 1, 2) + crps_gaussian(0, 0.1, 1)) / 3.0;
  EXPECT_NEAR(r.crps, c, 1e-14);
  EXPECT_THROW(summarize(f, std::vector<double>{1.0}), Error);
}
