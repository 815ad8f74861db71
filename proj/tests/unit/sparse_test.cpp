#include <cmath>
#include <memory>

#include <Eigen/Cholesky>
#include <gtest/gtest.h>

#include "nngp/error.hpp"
#include "nngp/nn_factor.hpp"
#include "nngp/sparse.hpp"
#include "support/oracles.hpp"

using namespace nngp;

namespace {

SparseSymmetric from_dense(const Eigen::MatrixXd& a) {
  const auto n = static_cast<std::size_t>(a.rows());
  std::vector<std::size_t> ptr{0}, rows;
  std::vector<double> vals;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const double v = a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (v != 0.0 || i == j) {
        rows.push_back(i);
        vals.push_back(v);
      }
    }
    ptr.push_back(rows.size());
  }
  return SparseSymmetric(n, ptr, rows, vals);
}

SparseSymmetric tridiagonal(std::size_t n) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    a(i, i) = 4.0;
    if (i + 1 < a.rows()) a(i, i + 1) = a(i + 1, i) = -1.0;
  }
  return from_dense(a);
}

SparseSymmetric nngp_omega(std::size_t n, std::size_t m, double tau2, std::uint64_t seed) {
  const auto pts = oracle::uniform_points(n, seed);
  auto graph = std::make_shared<const NeighborGraph>(build_neighbor_graph(pts, m));
  std::vector<Point> ordered;
  for (auto i : graph->order()) ordered.push_back(pts[i]);
  const CovarianceModel model(CovarianceParams{1.0, 6.0, 0.5, 0.0});
  const NNFactor f = build_factor(CoordinateCovariance(ordered, model, false), graph);
  return assemble_precision(f, 1.0 / tau2);
}

Eigen::MatrixXd permuted_dense(const SparseSymmetric& a, const Permutation& p) {
  const Eigen::MatrixXd d = a.to_dense();
  const auto n = d.rows();
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      out(i, j) = d(static_cast<Eigen::Index>(p.forward()[static_cast<std::size_t>(i)]),
                    static_cast<Eigen::Index>(p.forward()[static_cast<std::size_t>(j)]));
  return out;
}

}  // namespace

TEST(Permutation, ForwardInverse) {
  const Permutation p({2, 0, 3, 1});
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(p.inverse()[p.forward()[k]], k);
  Eigen::VectorXd x(4);
  x << 10, 11, 12, 13;
  const Eigen::VectorXd px = p.apply(x);
  EXPECT_EQ(px[0], 12);
  EXPECT_EQ(p.apply_transpose(px), x);
  EXPECT_THROW(Permutation({0, 0, 1}), Error);
}

TEST(SparseSymmetric, RejectsAsymmetricPattern) {
  SparseSymmetric bad(2, {0, 2, 3}, {0, 1, 1}, {1.0, 0.5, 1.0});
  EXPECT_THROW(bad.validate_structure(), Error);
}

TEST(FillReducing, DiagonalGivesIdentity) {
  const SparseSymmetric d = from_dense(Eigen::Vector3d(1, 2, 3).asDiagonal());
  for (auto method : {OrderingMethod::natural, OrderingMethod::approximate_minimum_degree,
                      OrderingMethod::reverse_cuthill_mckee}) {
    const Permutation p = fill_reducing_permutation(d, method);
    EXPECT_EQ(p.forward(), (std::vector<std::size_t>{0, 1, 2}));
  }
}

TEST(FillReducing, TridiagonalNoWorseThanNatural) {
  const SparseSymmetric t = tridiagonal(200);
  const std::size_t natural = symbolic_factor_nnz(t, Permutation::identity(200));
  EXPECT_LE(symbolic_factor_nnz(t, fill_reducing_permutation(t)), natural);
  EXPECT_LE(symbolic_factor_nnz(t, fill_reducing_permutation(t, OrderingMethod::reverse_cuthill_mckee)),
            natural);
}

TEST(FillReducing, NngpPatternBeatsIdentity) {
  const SparseSymmetric omega = nngp_omega(2000, 15, 1.0, 42);
  const std::size_t natural = symbolic_factor_nnz(omega, Permutation::identity(2000));
  const std::size_t amd = symbolic_factor_nnz(omega, fill_reducing_permutation(omega));
  EXPECT_LT(amd, natural);
}

TEST(FillReducing, Deterministic) {
  const SparseSymmetric omega = nngp_omega(500, 10, 1.0, 3);
  EXPECT_EQ(fill_reducing_permutation(omega).forward(), fill_reducing_permutation(omega).forward());
  EXPECT_EQ(ordering_method_from_string("amd"), OrderingMethod::approximate_minimum_degree);
  EXPECT_EQ(ordering_method_from_string(to_string(OrderingMethod::reverse_cuthill_mckee)),
            OrderingMethod::reverse_cuthill_mckee);
  EXPECT_THROW(ordering_method_from_string("metis"), Error);
}

TEST(SparseCholesky, Diagonal) {
  const SparseSymmetric d = from_dense(Eigen::Vector2d(4, 9).asDiagonal());
  const SparseCholesky c = sparse_cholesky(d, Permutation::identity(2));
  Eigen::Matrix2d want;
  want << 2, 0, 0, 3;
  EXPECT_LT((c.l_dense() - want).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NEAR(log_det_from_chol(c), 2.0 * (std::log(2.0) + std::log(3.0)), 1e-14);
}

TEST(SparseCholesky, TwoByTwo) {
  Eigen::Matrix2d a;
  a << 4, 2, 2, 5;
  const SparseCholesky c = sparse_cholesky(from_dense(a), Permutation::identity(2));
  Eigen::Matrix2d want;
  want << 2, 0, 1, 2;
  EXPECT_LT((c.l_dense() - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SparseCholesky, ReportsPivot) {
  Eigen::Matrix3d a;
  a << 1, 0, 0, 0, 1, 2, 0, 2, 1;
  try {
    sparse_cholesky(from_dense(a), Permutation::identity(3));
    FAIL() << "expected a factorization error";
  } catch (const FactorizationError& e) {
    EXPECT_EQ(e.index(), 2u);
  }
}

TEST(SparseCholesky, MatchesDenseOnNngpOmega) {
  const SparseSymmetric omega = nngp_omega(300, 15, 0.5, 7);
  const Permutation perm = fill_reducing_permutation(omega);
  const SparseCholesky c = sparse_cholesky(omega, perm);
  const Eigen::MatrixXd pap = permuted_dense(omega, perm);
  const Eigen::MatrixXd ld = pap.llt().matrixL();
  const Eigen::MatrixXd l = c.l_dense();
  EXPECT_LT((l - ld).cwiseAbs().maxCoeff() / ld.cwiseAbs().maxCoeff(), 1e-8);
  for (Eigen::Index i = 0; i < l.rows(); ++i) EXPECT_GT(l(i, i), 0.0);
  EXPECT_LT((l * l.transpose() - pap).cwiseAbs().maxCoeff() / pap.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(SparseCholesky, LogDetMatchesDense) {
  const SparseSymmetric omega = nngp_omega(200, 10, 2.0, 9);
  const SparseCholesky c = sparse_cholesky(omega, fill_reducing_permutation(omega));
  EXPECT_LT(oracle::relative_error(c.log_det(), oracle::log_det(omega.to_dense())), 1e-10);
  EXPECT_EQ(log_det_from_chol(sparse_cholesky(from_dense(Eigen::MatrixXd::Identity(3, 3)),
                                              Permutation::identity(3))),
            0.0);
}

TEST(SparseCholesky, SolveIsPermutationInvariant) {
  const SparseSymmetric omega = nngp_omega(250, 12, 0.8, 11);
  Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(250, -1.0, 2.0);
  const Eigen::VectorXd want = omega.to_dense().llt().solve(b);
  for (auto method : {OrderingMethod::natural, OrderingMethod::approximate_minimum_degree,
                      OrderingMethod::reverse_cuthill_mckee}) {
    const SparseCholesky c = sparse_cholesky(omega, fill_reducing_permutation(omega, method));
    const Eigen::VectorXd x = c.solve(b);
    EXPECT_LT((x - want).cwiseAbs().maxCoeff() / want.cwiseAbs().maxCoeff(), 1e-8) << to_string(method);
  }
}

TEST(SparseCholesky, TriangularSolvesHaveSmallResidual) {
  const SparseSymmetric omega = nngp_omega(150, 8, 1.0, 12);
  const SparseCholesky c = sparse_cholesky(omega, fill_reducing_permutation(omega));
  const Eigen::MatrixXd l = c.l_dense();
  const Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(150, 1.0, 3.0);
  const Eigen::VectorXd x = solve_lower(c, b);
  EXPECT_LE((l * x - b).norm(), 1e-10 * b.norm());
  const Eigen::VectorXd y = solve_upper(c, b);
  EXPECT_LE((l.transpose() * y - b).norm(), 1e-10 * b.norm());

  const SparseCholesky id = sparse_cholesky(from_dense(Eigen::MatrixXd::Identity(3, 3)), Permutation::identity(3));
  EXPECT_EQ(solve_lower(id, Eigen::Vector3d(1, 2, 3)), Eigen::Vector3d(1, 2, 3));
  const SparseCholesky two = sparse_cholesky(from_dense(Eigen::MatrixXd::Identity(1, 1) * 4.0), Permutation::identity(1));
  EXPECT_DOUBLE_EQ(solve_lower(two, Eigen::VectorXd::Constant(1, 4.0))[0], 2.0);
}

TEST(SparseCholesky, SymbolicPatternFixedAcrossValues) {
  const auto pts = oracle::uniform_points(400, 5);
  auto graph = std::make_shared<const NeighborGraph>(build_neighbor_graph(pts, 10));
  std::vector<Point> ordered;
  for (auto i : graph->order()) ordered.push_back(pts[i]);
  PrecisionAssembler assembler(*graph);
  SparseCholesky chol = SparseCholesky::analyze(assembler.pattern(), fill_reducing_permutation(assembler.pattern()));
  const auto rows = chol.row_idx();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  for (int k = 0; k < 10; ++k) {
    const CovarianceModel model(CovarianceParams{u(rng), 3.0 + 10.0 * u(rng), 0.5, 0.0});
    const NNFactor f = build_factor(CoordinateCovariance(ordered, model, false), graph);
    chol.factorize(assembler.assemble(f, 1.0 / u(rng)));
    EXPECT_EQ(chol.row_idx(), rows);
  }
  EXPECT_EQ(fill_reducing_permutation(assembler.pattern()).forward(), chol.permutation().forward());
}
