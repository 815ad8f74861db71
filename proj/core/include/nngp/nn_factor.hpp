#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nngp/covariance.hpp"
#include "nngp/error.hpp"
#include "nngp/neighbor.hpp"
#include "nngp/parallel.hpp"
#include "nngp/sparse.hpp"

namespace nngp {

/// Sparse factor of a neighbor-restricted covariance:
/// Ctilde^{-1} = (I - A)^T D^{-1} (I - A) with A strictly lower triangular.
/// Row i of A is stored at the positions of the graph's neighbor list for i.
class NNFactor {
 public:
  NNFactor() = default;
  explicit NNFactor(std::shared_ptr<const NeighborGraph> graph);

  std::size_t size() const noexcept { return d_.size(); }
  const NeighborGraph& graph() const noexcept { return *graph_; }
  const std::shared_ptr<const NeighborGraph>& graph_ptr() const noexcept { return graph_; }

  std::span<const double> row(std::size_t i) const noexcept {
    return {a_.data() + graph_->offset(i), graph_->neighbors(i).size()};
  }
  std::span<double> row(std::size_t i) noexcept {
    return {a_.data() + graph_->offset(i), graph_->neighbors(i).size()};
  }
  double d(std::size_t i) const noexcept { return d_[i]; }
  double& d(std::size_t i) noexcept { return d_[i]; }

  const std::vector<double>& a_values() const noexcept { return a_; }
  const std::vector<double>& d_values() const noexcept { return d_; }

 private:
  std::shared_ptr<const NeighborGraph> graph_;
  std::vector<double> a_;
  std::vector<double> d_;
};

namespace detail {

/// In-place Cholesky of a k x k row-major SPD matrix (lower triangle used).
/// Returns false on a non-positive pivot.
bool small_cholesky(double* a, std::size_t k) noexcept;
/// Solves L L^T x = b in place given the output of small_cholesky.
void small_cholesky_solve(const double* l, std::size_t k, double* b) noexcept;

[[noreturn]] void throw_row_failure(std::size_t row, const char* what);

}  // namespace detail

/// Fills `factor` in place from a covariance accessor cov(i, j) over ordered
/// indices. Each row solves the |N(i)| x |N(i)| system C[N,N] a = C[N,i] and
/// sets D[i] = C[i,i] - C[i,N] a. Rows are independent and are computed in
/// parallel; the result does not depend on the thread count. `jitter` is added
/// to the diagonal of every neighbor block and to C[i,i].
template <typename Accessor>
void build_factor_into(const Accessor& cov, NNFactor& factor, double jitter = 0.0) {
  const NeighborGraph& graph = factor.graph();
  const std::size_t n = graph.size();
  const std::size_t m = graph.max_neighbors();
  std::vector<int> failed(n, 0);
  const auto sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel num_threads(thread_budget())
  {
    std::vector<double> block(m * m);
    std::vector<double> rhs(m);
#pragma omp for schedule(static)
    for (std::ptrdiff_t si = 0; si < sn; ++si) {
      const auto i = static_cast<std::size_t>(si);
      const auto nb = graph.neighbors(i);
      const std::size_t k = nb.size();
      double cii = cov(i, i) + jitter;
      auto arow = factor.row(i);
      for (std::size_t r = 0; r < k; ++r) {
        rhs[r] = cov(nb[r], i);
        for (std::size_t c = 0; c <= r; ++c) block[r * k + c] = cov(nb[r], nb[c]);
        block[r * k + r] += jitter;
      }
      if (!detail::small_cholesky(block.data(), k)) {
        failed[i] = 1;
        continue;
      }
      double dot = 0.0;
      for (std::size_t r = 0; r < k; ++r) arow[r] = rhs[r];
      detail::small_cholesky_solve(block.data(), k, arow.data());
      for (std::size_t r = 0; r < k; ++r) dot += rhs[r] * arow[r];
      const double di = cii - dot;
      if (!(di > 0.0)) failed[i] = 2;
      factor.d(i) = di;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (failed[i] == 1) detail::throw_row_failure(i, "neighbor block is not positive definite");
    if (failed[i] == 2) detail::throw_row_failure(i, "conditional variance is not positive");
  }
}

template <typename Accessor>
NNFactor build_factor(const Accessor& cov, std::shared_ptr<const NeighborGraph> graph,
                      double jitter = 0.0) {
  NNFactor factor(std::move(graph));
  build_factor_into(cov, factor, jitter);
  return factor;
}

/// Accessor for a covariance model over ordered coordinates.
class CoordinateCovariance {
 public:
  CoordinateCovariance(std::span<const Point> ordered, const CovarianceModel& model,
                       bool add_nugget)
      : coords_(ordered),
        corr_(model.family(), model.params().phi, model.params().nu),
        sigma2_(model.params().sigma2),
        nugget_(add_nugget ? model.params().tau2 : 0.0) {}

  double operator()(std::size_t i, std::size_t j) const noexcept {
    if (i == j) return sigma2_ + nugget_;
    double c = sigma2_ * corr_(distance(coords_[i], coords_[j]));
    if (nugget_ != 0.0 && coords_[i] == coords_[j]) c += nugget_;
    return c;
  }

 private:
  std::span<const Point> coords_;
  Correlation corr_;
  double sigma2_;
  double nugget_;
};

/// Full-conditioning factor of a dense SPD matrix (every predecessor is a
/// neighbor). Intended as a test oracle; refuses n above `max_n`.
NNFactor dense_factor(const Eigen::MatrixXd& cov, std::size_t max_n = 2000);

/// u^T Ctilde^{-1} v in O(n m).
double quadratic_form(std::span<const double> u, std::span<const double> v,
                      const NNFactor& factor);

/// log det Ctilde = sum_i log D[i].
double log_det(const NNFactor& factor);

/// Sparse symmetric (I - A)^T D^{-1} (I - A) + shift I.
SparseSymmetric assemble_precision(const NNFactor& factor, double shift);

/// Pattern of the NNGP precision for a fixed graph, with a scatter map so
/// that refilling values for new parameters costs O(n m^2) and no searches.
class PrecisionAssembler {
 public:
  explicit PrecisionAssembler(const NeighborGraph& graph);

  const SparseSymmetric& pattern() const noexcept { return pattern_; }

  /// Overwrites the values of `out`, which must carry pattern().
  void assemble(const NNFactor& factor, double shift, SparseSymmetric& out) const;
  SparseSymmetric assemble(const NNFactor& factor, double shift) const;

 private:
  SparseSymmetric pattern_;
  std::vector<std::size_t> row_start_;  // per graph row, into scatter_
  std::vector<std::size_t> scatter_;    // (k+1)^2 value positions per row
  std::vector<std::size_t> diagonal_;
};

/// Dense (I - A)^{-1} D (I - A)^{-T}; O(n^3), for checks on small n.
Eigen::MatrixXd reconstruct_covariance(const NNFactor& factor);

/// Draws w ~ N(0, Ctilde) by forward substitution through the factor.
template <typename Rng>
Eigen::VectorXd sample_from_factor(const NNFactor& factor, Rng& normal_source) {
  const std::size_t n = factor.size();
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto nb = factor.graph().neighbors(i);
    const auto a = factor.row(i);
    double mean = 0.0;
    for (std::size_t k = 0; k < nb.size(); ++k) mean += a[k] * w[static_cast<Eigen::Index>(nb[k])];
    w[static_cast<Eigen::Index>(i)] = mean + std::sqrt(factor.d(i)) * normal_source();
  }
  return w;
}

}  // namespace nngp
