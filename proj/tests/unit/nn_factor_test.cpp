#include <cmath>
#include <memory>

#include <Eigen/Cholesky>
#include <gtest/gtest.h>

#include "nngp/error.hpp"
#include "nngp/nn_factor.hpp"
#include "nngp/parallel.hpp"
#include "nngp/sparse.hpp"
#include "support/oracles.hpp"

using namespace nngp;

namespace {

struct Problem {
  std::vector<Point> ordered;
  std::shared_ptr<const NeighborGraph> graph;
};

Problem make_problem(std::size_t n, std::size_t m, std::uint64_t seed) {
  const auto pts = oracle::uniform_points(n, seed);
  auto graph = std::make_shared<const NeighborGraph>(build_neighbor_graph(pts, m));
  Problem p;
  for (auto i : graph->order()) p.ordered.push_back(pts[i]);
  p.graph = graph;
  return p;
}

struct DenseAccessor {
  const Eigen::MatrixXd* c;
  double operator()(std::size_t i, std::size_t j) const {
    return (*c)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
};

}  // namespace

TEST(BuildFactor, SinglePoint) {
  const std::vector<Point> p{{0.2, 0.3}};
  auto g = std::make_shared<const NeighborGraph>(brute_force_neighbors(p, 3));
  const CovarianceModel model(CovarianceParams{2.5, 1.0, 0.5, 0.0});
  const NNFactor f = build_factor(CoordinateCovariance(p, model, false), g);
  EXPECT_TRUE(f.a_values().empty());
  EXPECT_DOUBLE_EQ(f.d(0), 2.5);
}

TEST(BuildFactor, CollinearClosedForm) {
  const std::vector<Point> p{{0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}};
  auto g = std::make_shared<const NeighborGraph>(brute_force_neighbors(p, 1));
  const CovarianceModel model(CovarianceParams{1.0, 1.0, 0.5, 0.0});
  const NNFactor f = build_factor(CoordinateCovariance(p, model, false), g);
  const double e1 = std::exp(-1.0);
  EXPECT_NEAR(f.row(1)[0], e1, 1e-15);
  EXPECT_NEAR(f.row(2)[0], e1, 1e-15);
  EXPECT_EQ(g->neighbors(2)[0], 1u);
  EXPECT_NEAR(f.d(1), 1.0 - std::exp(-2.0), 1e-15);
  EXPECT_NEAR(f.d(2), 1.0 - std::exp(-2.0), 1e-15);
  EXPECT_DOUBLE_EQ(f.d(0), 1.0);
}

TEST(BuildFactor, ReconstructsDenseAtSaturation) {
  const auto pr = make_problem(5, 4, 21);
  const CovarianceModel model(CovarianceParams{1.3, 3.0, 0.5, 0.0});
  const NNFactor f = build_factor(CoordinateCovariance(pr.ordered, model, false), pr.graph);
  const Eigen::MatrixXd dense = oracle::exponential_cov(pr.ordered, 1.3, 3.0, 0.0);
  EXPECT_LT((reconstruct_covariance(f) - dense).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(BuildFactor, ReportsFailingRow) {
  std::vector<std::size_t> offsets{0, 0, 1, 3}, indices{0, 0, 1}, order{0, 1, 2};
  auto g = std::make_shared<const NeighborGraph>(2, offsets, indices, order);
  Eigen::MatrixXd c(3, 3);
  c << 1, 0.5, 0.2, 0.5, 1, 0.5, 0.2, 0.5, 1;
  Eigen::MatrixXd bad = c;
  bad(2, 2) = 0.1;  // conditional variance of row 2 goes negative
  try {
    build_factor(DenseAccessor{&bad}, g);
    FAIL() << "expected a factorization error";
  } catch (const FactorizationError& e) {
    EXPECT_EQ(e.index(), 2u);
  }
  EXPECT_NO_THROW(build_factor(DenseAccessor{&c}, g));
}

TEST(BuildFactor, ThreadCountDoesNotChangeValues) {
  const auto pr = make_problem(3000, 15, 5);
  const CovarianceModel model(CovarianceParams{1.0, 6.0, 0.5, 1.0});
  NNFactor serial, parallel;
  {
    ThreadBudgetScope s(1);
    serial = build_factor(CoordinateCovariance(pr.ordered, model, true), pr.graph);
  }
  {
    ThreadBudgetScope s(4);
    parallel = build_factor(CoordinateCovariance(pr.ordered, model, true), pr.graph);
  }
  EXPECT_EQ(serial.a_values(), parallel.a_values());
  EXPECT_EQ(serial.d_values(), parallel.d_values());
}

TEST(DenseFactor, Identity) {
  const NNFactor f = dense_factor(Eigen::MatrixXd::Identity(4, 4));
  for (double a : f.a_values()) EXPECT_EQ(a, 0.0);
  for (double d : f.d_values()) EXPECT_EQ(d, 1.0);
}

TEST(DenseFactor, TwoByTwo) {
  Eigen::Matrix2d c;
  c << 1.0, 0.6, 0.6, 1.0;
  const NNFactor f = dense_factor(c);
  EXPECT_NEAR(f.row(1)[0], 0.6, 1e-15);
  EXPECT_NEAR(f.d(1), 1.0 - 0.36, 1e-15);
}

TEST(DenseFactor, MatchesSaturatedBuild) {
  const auto pr = make_problem(50, 49, 2);
  const CovarianceModel model(CovarianceParams{1.0, 4.0, 0.5, 0.3});
  const NNFactor built = build_factor(CoordinateCovariance(pr.ordered, model, true), pr.graph);
  const NNFactor dense = dense_factor(oracle::exponential_cov(pr.ordered, 1.0, 4.0, 0.3));
  // The saturated graph lists neighbors by distance; compare through C~.
  EXPECT_LT((reconstruct_covariance(built) - reconstruct_covariance(dense)).cwiseAbs().maxCoeff(), 1e-10);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_LT(oracle::relative_error(built.d(i), dense.d(i)), 1e-10);
}

TEST(DenseFactor, RejectsNonSpdAndLargeInput) {
  Eigen::Matrix2d c;
  c << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(dense_factor(c), FactorizationError);
  EXPECT_THROW(dense_factor(Eigen::MatrixXd::Identity(30, 30), 20), Error);
}

TEST(QuadraticForm, TrivialCases) {
  const auto pr = make_problem(10, 3, 1);
  const CovarianceModel model(CovarianceParams{1.0, 2.0, 0.5, 0.0});
  const NNFactor f = build_factor(CoordinateCovariance(pr.ordered, model, false), pr.graph);
  const std::vector<double> zero(10, 0.0);
  EXPECT_EQ(quadratic_form(zero, zero, f), 0.0);
  const std::vector<double> shorter(9, 1.0);
  EXPECT_THROW(quadratic_form(shorter, shorter, f), Error);

  const std::vector<Point> one{{0.0, 0.0}};
  auto g = std::make_shared<const NeighborGraph>(brute_force_neighbors(one, 1));
  const NNFactor f1 = build_factor(CoordinateCovariance(one, CovarianceModel(CovarianceParams{4.0, 1.0, 0.5, 0.0}), false), g);
  const std::vector<double> u{3.0}, v{2.0};
  EXPECT_DOUBLE_EQ(quadratic_form(u, v, f1), 1.5);
}

TEST(QuadraticForm, MatchesDenseInverse) {
  const auto pr = make_problem(10, 3, 4);
  const CovarianceModel model(CovarianceParams{1.0, 2.0, 0.5, 0.1});
  const NNFactor f = build_factor(CoordinateCovariance(pr.ordered, model, true), pr.graph);
  const Eigen::MatrixXd ct = reconstruct_covariance(f);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  Eigen::VectorXd u(10), v(10);
  for (int i = 0; i < 10; ++i) {
    u[i] = nd(rng);
    v[i] = nd(rng);
  }
  const double want = u.dot(ct.llt().solve(v));
  EXPECT_LT(oracle::relative_error(quadratic_form({u.data(), 10}, {v.data(), 10}, f), want), 1e-10);
}

TEST(LogDet, TrivialAndSaturated) {
  const std::vector<Point> one{{0.0, 0.0}};
  auto g = std::make_shared<const NeighborGraph>(brute_force_neighbors(one, 1));
  const NNFactor f1 = build_factor(CoordinateCovariance(one, CovarianceModel(CovarianceParams{4.0, 1.0, 0.5, 0.0}), false), g);
  EXPECT_DOUBLE_EQ(log_det(f1), std::log(4.0));
  EXPECT_EQ(log_det(dense_factor(Eigen::MatrixXd::Identity(3, 3))), 0.0);

  const auto pr = make_problem(100, 99, 8);
  const CovarianceModel model(CovarianceParams{1.0, 5.0, 0.5, 0.5});
  const NNFactor f = build_factor(CoordinateCovariance(pr.ordered, model, true), pr.graph);
  const double want = oracle::log_det(oracle::exponential_cov(pr.ordered, 1.0, 5.0, 0.5));
  EXPECT_LT(oracle::relative_error(log_det(f), want), 1e-10);
}

TEST(AssemblePrecision, IdentityFactor) {
  const SparseSymmetric p = assemble_precision(dense_factor(Eigen::MatrixXd::Identity(4, 4)), 0.0);
  EXPECT_LT((p.to_dense() - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(AssemblePrecision, MatchesDenseShiftedInverse) {
  const auto pr = make_problem(50, 49, 13);
  const CovarianceModel model(CovarianceParams{1.0, 6.0, 0.5, 0.0});
  const NNFactor f = build_factor(CoordinateCovariance(pr.ordered, model, false), pr.graph);
  const double tau2 = 0.7;
  const SparseSymmetric omega = assemble_precision(f, 1.0 / tau2);
  const Eigen::MatrixXd c = oracle::exponential_cov(pr.ordered, 1.0, 6.0, 0.0);
  const Eigen::MatrixXd want = c.llt().solve(Eigen::MatrixXd::Identity(50, 50)) +
                               Eigen::MatrixXd::Identity(50, 50) / tau2;
  const double scale = want.cwiseAbs().maxCoeff();
  EXPECT_LT((omega.to_dense() - want).cwiseAbs().maxCoeff() / scale, 1e-8);
}

TEST(AssemblePrecision, PatternStructure) {
  const auto pr = make_problem(400, 10, 3);
  const CovarianceModel model(CovarianceParams{1.0, 6.0, 0.5, 0.0});
  const NNFactor f = build_factor(CoordinateCovariance(pr.ordered, model, false), pr.graph);
  const SparseSymmetric omega = assemble_precision(f, 2.0);
  EXPECT_NO_THROW(omega.validate_structure());
  EXPECT_LE(omega.nnz(), 400u * 11u * 11u);
  const Eigen::MatrixXd d = omega.to_dense();
  EXPECT_LT((d - d.transpose()).cwiseAbs().maxCoeff(), 1e-14);
  PrecisionAssembler assembler(*pr.graph);
  SparseSymmetric again = assembler.pattern();
  assembler.assemble(f, 2.0, again);
  EXPECT_EQ(again.values(), omega.values());
}

TEST(SampleFromFactor, ZeroNoiseGivesZero) {
  const auto pr = make_problem(20, 5, 3);
  const CovarianceModel model(CovarianceParams{1.0, 6.0, 0.5, 0.0});
  const NNFactor f = build_factor(CoordinateCovariance(pr.ordered, model, false), pr.graph);
  auto zero = [] { return 0.0; };
  EXPECT_EQ(sample_from_factor(f, zero).squaredNorm(), 0.0);
}
