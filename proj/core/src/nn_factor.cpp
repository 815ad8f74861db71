#include "nngp/nn_factor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Cholesky>

#include "nngp/sparse.hpp"

namespace nngp {

NNFactor::NNFactor(std::shared_ptr<const NeighborGraph> graph)
    : graph_(std::move(graph)),
      a_(graph_->total_neighbors(), 0.0),
      d_(graph_->size(), 0.0) {}

namespace detail {

bool small_cholesky(double* a, std::size_t k) noexcept {
  for (std::size_t j = 0; j < k; ++j) {
    double d = a[j * k + j];
    for (std::size_t p = 0; p < j; ++p) d -= a[j * k + p] * a[j * k + p];
    if (!(d > 0.0)) return false;
    const double ljj = std::sqrt(d);
    a[j * k + j] = ljj;
    for (std::size_t i = j + 1; i < k; ++i) {
      double s = a[i * k + j];
      for (std::size_t p = 0; p < j; ++p) s -= a[i * k + p] * a[j * k + p];
      a[i * k + j] = s / ljj;
    }
  }
  return true;
}

void small_cholesky_solve(const double* l, std::size_t k, double* b) noexcept {
  for (std::size_t i = 0; i < k; ++i) {
    double s = b[i];
    for (std::size_t p = 0; p < i; ++p) s -= l[i * k + p] * b[p];
    b[i] = s / l[i * k + i];
  }
  for (std::size_t i = k; i-- > 0;) {
    double s = b[i];
    for (std::size_t p = i + 1; p < k; ++p) s -= l[p * k + i] * b[p];
    b[i] = s / l[i * k + i];
  }
}

void throw_row_failure(std::size_t row, const char* what) {
  throw FactorizationError(row, std::string("NNGP factor row ") + std::to_string(row) + ": " + what);
}

}  // namespace detail

NNFactor dense_factor(const Eigen::MatrixXd& cov, std::size_t max_n) {
  const auto n = static_cast<std::size_t>(cov.rows());
  if (cov.cols() != cov.rows()) throw Error(ErrorKind::dimension, "dense_factor: matrix is not square");
  if (n > max_n) {
    throw Error(ErrorKind::configuration,
                "dense_factor: n=" + std::to_string(n) + " exceeds oracle cap " + std::to_string(max_n));
  }
  std::vector<std::size_t> offsets(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) offsets[i + 1] = offsets[i] + i;
  std::vector<std::size_t> indices(offsets.back());
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(indices.begin() + static_cast<std::ptrdiff_t>(offsets[i]),
              indices.begin() + static_cast<std::ptrdiff_t>(offsets[i + 1]), std::size_t{0});
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto graph = std::make_shared<const NeighborGraph>(n == 0 ? 0 : n - 1, std::move(offsets),
                                                     std::move(indices), std::move(order));
  NNFactor factor(graph);
  // Row i of the full-conditioning factor is the last row of the unit lower
  // triangular LDL^T factor of C[0:i+1, 0:i+1] inverted.
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (i == 0) {
      if (!(cov(0, 0) > 0.0)) detail::throw_row_failure(0, "non-positive variance");
      factor.d(0) = cov(0, 0);
      continue;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov.topLeftCorner(ii, ii));
    if (llt.info() != Eigen::Success) detail::throw_row_failure(i, "leading block is not positive definite");
    const Eigen::VectorXd rhs = cov.col(ii).head(ii);
    const Eigen::VectorXd a = llt.solve(rhs);
    const double di = cov(ii, ii) - rhs.dot(a);
    if (!(di > 0.0)) detail::throw_row_failure(i, "conditional variance is not positive");
    auto row = factor.row(i);
    for (std::size_t k = 0; k < i; ++k) row[k] = a[static_cast<Eigen::Index>(k)];
    factor.d(i) = di;
  }
  return factor;
}

double quadratic_form(std::span<const double> u, std::span<const double> v,
                      const NNFactor& factor) {
  const std::size_t n = factor.size();
  if (u.size() != n || v.size() != n) {
    throw Error(ErrorKind::dimension, "quadratic_form: vector length does not match factor");
  }
  const NeighborGraph& graph = factor.graph();
  // Fixed blocking keeps the summation order independent of the thread count.
  constexpr std::size_t block = 2048;
  const std::size_t nblocks = (n + block - 1) / block;
  std::vector<double> partial(nblocks, 0.0);
  const bool same = u.data() == v.data();
  const auto sb = static_cast<std::ptrdiff_t>(nblocks);
#pragma omp parallel for schedule(static) num_threads(thread_budget()) if (nblocks > 1)
  for (std::ptrdiff_t b = 0; b < sb; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * block;
    const std::size_t hi = std::min(n, lo + block);
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const auto nb = graph.neighbors(i);
      const auto a = factor.row(i);
      double eu = u[i];
      double ev = v[i];
      if (same) {
        for (std::size_t k = 0; k < nb.size(); ++k) eu -= a[k] * u[nb[k]];
        ev = eu;
      } else {
        for (std::size_t k = 0; k < nb.size(); ++k) {
          eu -= a[k] * u[nb[k]];
          ev -= a[k] * v[nb[k]];
        }
      }
      acc += eu * ev / factor.d(i);
    }
    partial[static_cast<std::size_t>(b)] = acc;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

double log_det(const NNFactor& factor) {
  double s = 0.0;
  for (double d : factor.d_values()) s += std::log(d);
  return s;
}

PrecisionAssembler::PrecisionAssembler(const NeighborGraph& graph) {
  const std::size_t n = graph.size();
  std::vector<std::vector<std::size_t>> cols(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto nb = graph.neighbors(i);
    cols[i].push_back(i);
    for (std::size_t a : nb) {
      cols[i].push_back(a);
      cols[a].push_back(i);
      for (std::size_t b : nb) cols[a].push_back(b);
    }
  }
  std::vector<std::size_t> col_ptr(n + 1, 0);
  for (std::size_t j = 0; j < n; ++j) {
    auto& c = cols[j];
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    col_ptr[j + 1] = col_ptr[j] + c.size();
  }
  std::vector<std::size_t> row_idx;
  row_idx.reserve(col_ptr.back());
  for (auto& c : cols) {
    row_idx.insert(row_idx.end(), c.begin(), c.end());
    std::vector<std::size_t>().swap(c);
  }
  const std::size_t nnz = row_idx.size();
  pattern_ = SparseSymmetric(n, std::move(col_ptr), std::move(row_idx), std::vector<double>(nnz, 0.0));

  row_start_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = graph.neighbors(i).size() + 1;
    row_start_[i + 1] = row_start_[i] + k * k;
  }
  scatter_.resize(row_start_.back());
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < n; ++i) {
    const auto nb = graph.neighbors(i);
    members.assign(1, i);
    members.insert(members.end(), nb.begin(), nb.end());
    const std::size_t k = members.size();
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t r = 0; r < k; ++r) {
        scatter_[row_start_[i] + c * k + r] = pattern_.find(members[r], members[c]);
      }
    }
  }
  diagonal_.resize(n);
  for (std::size_t j = 0; j < n; ++j) diagonal_[j] = pattern_.find(j, j);
}

void PrecisionAssembler::assemble(const NNFactor& factor, double shift,
                                  SparseSymmetric& out) const {
  const std::size_t n = factor.size();
  if (n != pattern_.size() || out.nnz() != pattern_.nnz()) {
    throw Error(ErrorKind::dimension, "precision pattern does not match the factor");
  }
  auto& values = out.values();
  std::fill(values.begin(), values.end(), 0.0);
  std::vector<double> coef;
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = factor.row(i);
    const std::size_t k = a.size() + 1;
    coef.resize(k);
    coef[0] = 1.0;
    for (std::size_t t = 0; t < a.size(); ++t) coef[t + 1] = -a[t];
    const double inv_d = 1.0 / factor.d(i);
    const std::size_t* pos = scatter_.data() + row_start_[i];
    for (std::size_t c = 0; c < k; ++c) {
      const double cc = coef[c] * inv_d;
      for (std::size_t r = 0; r < k; ++r) values[pos[c * k + r]] += coef[r] * cc;
    }
  }
  if (shift != 0.0) {
    for (std::size_t j = 0; j < n; ++j) values[diagonal_[j]] += shift;
  }
}

SparseSymmetric PrecisionAssembler::assemble(const NNFactor& factor, double shift) const {
  SparseSymmetric out = pattern_;
  assemble(factor, shift, out);
  return out;
}

SparseSymmetric assemble_precision(const NNFactor& factor, double shift) {
  return PrecisionAssembler(factor.graph()).assemble(factor, shift);
}

Eigen::MatrixXd reconstruct_covariance(const NNFactor& factor) {
  const auto n = static_cast<Eigen::Index>(factor.size());
  Eigen::MatrixXd ia = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto nb = factor.graph().neighbors(static_cast<std::size_t>(i));
    const auto a = factor.row(static_cast<std::size_t>(i));
    for (std::size_t k = 0; k < nb.size(); ++k) ia(i, static_cast<Eigen::Index>(nb[k])) = -a[k];
  }
  // (I - A)^{-1} D (I - A)^{-T} = B B^T with B = (I - A)^{-1} D^{1/2}.
  Eigen::MatrixXd b = ia.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
  for (Eigen::Index j = 0; j < n; ++j) b.col(j) *= std::sqrt(factor.d(static_cast<std::size_t>(j)));
  return b * b.transpose();
}

}  // namespace nngp
