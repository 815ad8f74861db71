#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <gtest/gtest.h>

#include "nngp/covariance.hpp"
#include "nngp/error.hpp"
#include "support/oracles.hpp"

using namespace nngp;

namespace {

// Reference values from an arbitrary-precision evaluation of
// sigma2 2^(1-nu)/Gamma(nu) (d phi)^nu K_nu(d phi).
struct MaternCase {
  double d, sigma2, phi, nu, want;
};

constexpr MaternCase kBesselTable[] = {
    {1.0, 1.0, 1.0, 0.75, 0.50053476184578455436},
    {0.3, 2.0, 6.0, 0.25, 0.15905119062743513308},
    {0.05, 1.5, 3.0, 1.0, 1.4574372246344388617},
    {2.5, 1.0, 1.3, 3.7, 0.43746162287848495687},
    {0.01, 1.0, 10.0, 0.5, 0.9048374180359596277},
    {0.7, 1.0, 4.0, 1.5, 0.23107823797582830403},
    {1.2, 1.0, 2.0, 2.5, 0.48261951149967456916},
    {3.0, 1.0, 5.0, 0.9, 1.1566634301416615039e-6},
    {1e-4, 1.0, 1.0, 1.2, 0.99999998775143904465},
    {15.0, 1.0, 2.0, 0.6, 1.4627906939002952393e-13},
};

}  // namespace

TEST(Matern, ZeroDistanceReturnsVariance) {
  EXPECT_DOUBLE_EQ(matern(0.0, 2.0, 6.0, 0.5), 2.0);
  EXPECT_DOUBLE_EQ(matern(0.0, 3.0, 1.0, 1.7), 3.0);
}

TEST(Matern, ExponentialClosedForm) {
  EXPECT_NEAR(matern(1.0, 1.0, 6.0, 0.5), std::exp(-6.0), 1e-18);
  EXPECT_NEAR(matern(1.0, 1.0, 6.0, 0.5), 2.478752e-3, 1e-9);
}

TEST(Matern, MatchesHighPrecisionBesselTable) {
  for (const auto& c : kBesselTable) {
    EXPECT_LT(oracle::relative_error(matern(c.d, c.sigma2, c.phi, c.nu), c.want), 1e-8)
        << "d=" << c.d << " nu=" << c.nu;
  }
}

TEST(Matern, HalfIntegerShortcutsAgreeWithBessel) {
  for (double nu : {0.5, 1.5, 2.5})
    for (double d = 0.001; d < 5.0; d *= 1.37) {
      const double general = matern_correlation_bessel(d, 2.3, nu);
      EXPECT_LT(oracle::relative_error(matern(d, 1.0, 2.3, nu), general), 1e-10)
          << "nu=" << nu << " d=" << d;
    }
}

TEST(Matern, MonotoneInDistance) {
  for (double nu : {0.3, 0.5, 1.0, 1.5, 2.5, 4.0}) {
    double prev = matern(0.0, 1.0, 3.0, nu);
    for (double d = 0.01; d < 10.0; d += 0.01) {
      const double v = matern(d, 1.0, 3.0, nu);
      EXPECT_LE(v, prev * (1.0 + 1e-14)) << "nu=" << nu << " d=" << d;
      prev = v;
    }
  }
}

TEST(Matern, CorrelationInvariantToVariance) {
  for (double d : {0.1, 0.5, 2.0})
    EXPECT_NEAR(matern(d, 7.5, 2.0, 0.9) / 7.5, matern(d, 1.0, 2.0, 0.9), 1e-15);
}

TEST(Matern, RejectsBadParameters) {
  EXPECT_THROW(matern(1.0, 0.0, 1.0, 0.5), Error);
  EXPECT_THROW(matern(1.0, 1.0, -1.0, 0.5), Error);
  EXPECT_THROW(matern(1.0, 1.0, 1.0, 0.0), Error);
  EXPECT_THROW(matern(1.0, std::numeric_limits<double>::infinity(), 1.0, 0.5), Error);
  try {
    matern(1.0, 1.0, 1.0, -2.0);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parameter_domain);
  }
}

TEST(CovarianceParams, AlphaIsRatio) {
  CovarianceParams p{2.0, 1.0, 0.5, 0.5};
  EXPECT_DOUBLE_EQ(p.alpha(), 0.25);
  EXPECT_THROW((CovarianceParams{1.0, 1.0, 0.5, -1.0}.validate()), Error);
}

TEST(CovBlock, SinglePointWithNugget) {
  const std::vector<Point> p{{0.3, 0.4}};
  const CovarianceModel model(CovarianceParams{2.0, 3.0, 0.5, 0.7});
  const Eigen::MatrixXd c = cov_block(p, p, model, true);
  ASSERT_EQ(c.rows(), 1);
  EXPECT_DOUBLE_EQ(c(0, 0), 2.7);
}

TEST(CovBlock, TwoPointsOnALine) {
  const std::vector<Point> p{{0.0, 0.0}, {1.0, 0.0}};
  const CovarianceModel model(CovarianceParams{1.0, 1.0, 0.5, 5.0});
  const Eigen::MatrixXd c = cov_block(p, p, model, false);
  EXPECT_DOUBLE_EQ(c(0, 0), 1.0);
  EXPECT_NEAR(c(0, 1), std::exp(-1.0), 1e-16);
  EXPECT_NEAR(c(1, 0), std::exp(-1.0), 1e-16);
}

TEST(CovBlock, EntrywiseMatchesScalarMatern) {
  const auto rows = oracle::uniform_points(5, 11);
  const auto cols = oracle::uniform_points(5, 12);
  const CovarianceModel model(CovarianceParams{1.7, 4.0, 1.3, 0.2});
  const Eigen::MatrixXd c = cov_block(rows, cols, model, true);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      EXPECT_LT(oracle::relative_error(c(i, j), matern(distance(rows[i], cols[j]), 1.7, 4.0, 1.3)),
                1e-12);
}

TEST(CovBlock, NuggetOnlyOnCoincidentLocations) {
  const std::vector<Point> rows{{0.1, 0.1}, {0.5, 0.5}};
  const std::vector<Point> cols{{0.5, 0.5}, {0.9, 0.1}};
  const CovarianceModel model(CovarianceParams{1.0, 2.0, 0.5, 0.3});
  const Eigen::MatrixXd c = cov_block(rows, cols, model, true);
  EXPECT_DOUBLE_EQ(c(1, 0), 1.3);
  EXPECT_NEAR(c(0, 0), std::exp(-2.0 * distance(rows[0], cols[0])), 1e-15);
}

TEST(CovBlock, SymmetricPositiveDefinite) {
  const auto pts = oracle::uniform_points(200, 3);
  for (double nu : {0.5, 1.1, 2.5}) {
    const CovarianceModel model(CovarianceParams{1.0, 5.0, nu, 0.0});
    const Eigen::MatrixXd c = cov_block(pts, pts, model, false);
    EXPECT_LT((c - c.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    EXPECT_EQ(llt.info(), Eigen::Success) << "nu=" << nu;
  }
}

TEST(CorrPlusAlpha, SinglePoint) {
  const std::vector<Point> p{{0.2, 0.2}};
  EXPECT_DOUBLE_EQ(corr_plus_alpha_block(p, p, 3.0, 0.5, 0.4)(0, 0), 1.4);
}

TEST(CorrPlusAlpha, EqualsUnitVarianceCovBlock) {
  const auto pts = oracle::uniform_points(10, 5);
  const Eigen::MatrixXd a = corr_plus_alpha_block(pts, pts, 6.0, 0.5, 0.8);
  const Eigen::MatrixXd b = cov_block(pts, pts, CovarianceModel(CovarianceParams{1.0, 6.0, 0.5, 0.8}), true);
  EXPECT_EQ(a, b);
  const Eigen::MatrixXd dense = oracle::exponential_cov(pts, 1.0, 6.0, 0.8);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) EXPECT_LT(oracle::relative_error(a(i, j), dense(i, j)), 1e-12);
}

TEST(CovarianceModel, FamilyDispatch) {
  EXPECT_EQ(family_for(0.5), CovarianceFamily::exponential);
  EXPECT_EQ(family_for(1.5), CovarianceFamily::matern_32);
  EXPECT_EQ(family_for(2.5), CovarianceFamily::matern_52);
  EXPECT_EQ(family_for(0.7), CovarianceFamily::matern_general);
  EXPECT_THROW(CovarianceModel(CovarianceFamily::exponential, CovarianceParams{1.0, 1.0, 1.5, 0.0}),
               Error);
  const CovarianceModel general(CovarianceFamily::matern_general, CovarianceParams{1.0, 2.0, 1.5, 0.0});
  const CovarianceModel closed(CovarianceParams{1.0, 2.0, 1.5, 0.0});
  EXPECT_LT(oracle::relative_error(general.covariance(0.4), closed.covariance(0.4)), 1e-10);
}
