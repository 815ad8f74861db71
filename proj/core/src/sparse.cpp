#include "nngp/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <string>
#include <tuple>

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>

#include "nngp/error.hpp"

namespace nngp {

namespace {

constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

/// Row pattern of L for row k (columns < k) in topological order, written to
/// stack[top..n). `mark`/`stamp` avoid clearing the visited set between rows.
std::size_t ereach(const std::vector<std::size_t>& c_ptr, const std::vector<std::size_t>& c_row,
                   std::size_t k, const std::vector<std::size_t>& parent,
                   std::vector<std::size_t>& stack, std::vector<std::size_t>& mark,
                   std::vector<std::size_t>& path) {
  const std::size_t n = parent.size();
  std::size_t top = n;
  mark[k] = k;
  for (std::size_t p = c_ptr[k]; p < c_ptr[k + 1]; ++p) {
    std::size_t i = c_row[p];
    if (i > k) continue;
    std::size_t len = 0;
    for (; mark[i] != k; i = parent[i]) {
      path[len++] = i;
      mark[i] = k;
    }
    while (len > 0) stack[--top] = path[--len];
  }
  return top;
}

}  // namespace

// ---------------------------------------------------------------------------
// SparseSymmetric

SparseSymmetric::SparseSymmetric(std::size_t n, std::vector<std::size_t> col_ptr,
                                 std::vector<std::size_t> row_idx, std::vector<double> values)
    : n_(n), col_ptr_(std::move(col_ptr)), row_idx_(std::move(row_idx)), values_(std::move(values)) {
  if (col_ptr_.size() != n_ + 1 || col_ptr_.back() != row_idx_.size() ||
      values_.size() != row_idx_.size()) {
    throw Error(ErrorKind::dimension, "inconsistent sparse matrix layout");
  }
}

std::size_t SparseSymmetric::find(std::size_t i, std::size_t j) const noexcept {
  const auto first = row_idx_.begin() + static_cast<std::ptrdiff_t>(col_ptr_[j]);
  const auto last = row_idx_.begin() + static_cast<std::ptrdiff_t>(col_ptr_[j + 1]);
  const auto it = std::lower_bound(first, last, i);
  if (it == last || *it != i) return nnz();
  return static_cast<std::size_t>(it - row_idx_.begin());
}

double SparseSymmetric::coeff(std::size_t i, std::size_t j) const noexcept {
  const std::size_t p = find(i, j);
  return p == nnz() ? 0.0 : values_[p];
}

Eigen::MatrixXd SparseSymmetric::to_dense() const {
  const auto n = static_cast<Eigen::Index>(n_);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t j = 0; j < n_; ++j) {
    for (std::size_t p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) {
      out(static_cast<Eigen::Index>(row_idx_[p]), static_cast<Eigen::Index>(j)) = values_[p];
    }
  }
  return out;
}

void SparseSymmetric::validate_structure() const {
  for (std::size_t j = 0; j < n_; ++j) {
    if (find(j, j) == nnz()) {
      throw Error(ErrorKind::dimension, "missing diagonal entry in column " + std::to_string(j));
    }
    for (std::size_t p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) {
      const std::size_t i = row_idx_[p];
      if (i >= n_) throw Error(ErrorKind::dimension, "row index out of range");
      if (p > col_ptr_[j] && row_idx_[p - 1] >= i) {
        throw Error(ErrorKind::dimension, "unsorted row indices in column " + std::to_string(j));
      }
      if (find(j, i) == nnz()) {
        throw Error(ErrorKind::dimension, "pattern is not structurally symmetric");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Permutation

Permutation::Permutation(std::vector<std::size_t> forward)
    : forward_(std::move(forward)), inverse_(forward_.size(), npos) {
  for (std::size_t k = 0; k < forward_.size(); ++k) {
    if (forward_[k] >= forward_.size() || inverse_[forward_[k]] != npos) {
      throw Error(ErrorKind::dimension, "not a permutation");
    }
    inverse_[forward_[k]] = k;
  }
}

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::size_t> f(n);
  std::iota(f.begin(), f.end(), std::size_t{0});
  return Permutation(std::move(f));
}

Eigen::VectorXd Permutation::apply(const Eigen::VectorXd& x) const {
  Eigen::VectorXd out(x.size());
  for (std::size_t k = 0; k < forward_.size(); ++k) {
    out[static_cast<Eigen::Index>(k)] = x[static_cast<Eigen::Index>(forward_[k])];
  }
  return out;
}

Eigen::VectorXd Permutation::apply_transpose(const Eigen::VectorXd& x) const {
  Eigen::VectorXd out(x.size());
  for (std::size_t k = 0; k < forward_.size(); ++k) {
    out[static_cast<Eigen::Index>(forward_[k])] = x[static_cast<Eigen::Index>(k)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Orderings

std::string_view to_string(OrderingMethod method) noexcept {
  switch (method) {
    case OrderingMethod::natural: return "natural";
    case OrderingMethod::approximate_minimum_degree: return "amd";
    case OrderingMethod::reverse_cuthill_mckee: return "rcm";
  }
  return "unknown";
}

OrderingMethod ordering_method_from_string(std::string_view name) {
  if (name == "natural" || name == "none") return OrderingMethod::natural;
  if (name == "amd") return OrderingMethod::approximate_minimum_degree;
  if (name == "rcm") return OrderingMethod::reverse_cuthill_mckee;
  throw Error(ErrorKind::configuration, "unknown ordering method '" + std::string(name) + "'");
}

namespace {

Permutation amd_ordering(const SparseSymmetric& pattern) {
  using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
  const auto n = static_cast<int>(pattern.size());
  std::vector<Eigen::Triplet<double, int>> triplets;
  triplets.reserve(pattern.nnz());
  for (std::size_t j = 0; j < pattern.size(); ++j) {
    for (std::size_t p = pattern.col_ptr()[j]; p < pattern.col_ptr()[j + 1]; ++p) {
      triplets.emplace_back(static_cast<int>(pattern.row_idx()[p]), static_cast<int>(j), 1.0);
    }
  }
  SpMat mat(n, n);
  mat.setFromTriplets(triplets.begin(), triplets.end());
  mat.makeCompressed();
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm;
  Eigen::AMDOrdering<int> amd;
  amd(mat.selfadjointView<Eigen::Lower>(), perm);
  std::vector<std::size_t> forward(pattern.size());
  for (int k = 0; k < n; ++k) forward[static_cast<std::size_t>(k)] = static_cast<std::size_t>(perm.indices()[k]);
  return Permutation(std::move(forward));
}

Permutation rcm_ordering(const SparseSymmetric& pattern) {
  const std::size_t n = pattern.size();
  const auto& cp = pattern.col_ptr();
  const auto& ri = pattern.row_idx();
  std::vector<std::size_t> degree(n);
  for (std::size_t j = 0; j < n; ++j) degree[j] = cp[j + 1] - cp[j];

  std::vector<std::size_t> level(n, npos);
  auto bfs_last = [&](std::size_t start, std::vector<std::size_t>& visited_stamp,
                      std::size_t stamp) {
    std::queue<std::size_t> q;
    q.push(start);
    visited_stamp[start] = stamp;
    std::size_t last = start;
    while (!q.empty()) {
      const std::size_t v = q.front();
      q.pop();
      last = v;
      for (std::size_t p = cp[v]; p < cp[v + 1]; ++p) {
        const std::size_t w = ri[p];
        if (visited_stamp[w] != stamp) {
          visited_stamp[w] = stamp;
          q.push(w);
        }
      }
    }
    return last;
  };

  std::vector<std::size_t> order;
  order.reserve(n);
  std::vector<bool> placed(n, false);
  std::vector<std::size_t> stamp(n, npos);
  std::size_t stamp_counter = 0;
  std::vector<std::size_t> by_degree(n);
  std::iota(by_degree.begin(), by_degree.end(), std::size_t{0});
  std::stable_sort(by_degree.begin(), by_degree.end(),
                   [&](std::size_t a, std::size_t b) { return degree[a] < degree[b]; });
  for (std::size_t seed : by_degree) {
    if (placed[seed]) continue;
    // Two sweeps towards a pseudo-peripheral start node.
    std::size_t start = bfs_last(seed, stamp, stamp_counter++);
    start = bfs_last(start, stamp, stamp_counter++);
    std::queue<std::size_t> q;
    q.push(start);
    placed[start] = true;
    std::vector<std::size_t> nbrs;
    while (!q.empty()) {
      const std::size_t v = q.front();
      q.pop();
      order.push_back(v);
      nbrs.clear();
      for (std::size_t p = cp[v]; p < cp[v + 1]; ++p) {
        if (!placed[ri[p]]) nbrs.push_back(ri[p]);
      }
      std::stable_sort(nbrs.begin(), nbrs.end(), [&](std::size_t a, std::size_t b) {
        return degree[a] < degree[b] || (degree[a] == degree[b] && a < b);
      });
      for (std::size_t w : nbrs) {
        placed[w] = true;
        q.push(w);
      }
    }
  }
  std::reverse(order.begin(), order.end());
  return Permutation(std::move(order));
}

bool is_diagonal(const SparseSymmetric& pattern) {
  for (std::size_t j = 0; j < pattern.size(); ++j) {
    if (pattern.col_ptr()[j + 1] - pattern.col_ptr()[j] > 1) return false;
  }
  return true;
}

}  // namespace

Permutation fill_reducing_permutation(const SparseSymmetric& pattern, OrderingMethod method) {
  if (method == OrderingMethod::natural || is_diagonal(pattern)) {
    return Permutation::identity(pattern.size());
  }
  if (method == OrderingMethod::reverse_cuthill_mckee) return rcm_ordering(pattern);
  return amd_ordering(pattern);
}

// ---------------------------------------------------------------------------
// SparseCholesky

SparseCholesky SparseCholesky::analyze(const SparseSymmetric& pattern, Permutation perm) {
  const std::size_t n = pattern.size();
  if (perm.size() != n) throw Error(ErrorKind::dimension, "permutation size mismatch");
  SparseCholesky chol;
  chol.n_ = n;
  chol.perm_ = std::move(perm);
  const auto& pinv = chol.perm_.inverse();

  // Upper triangle of P A P^T with a map from input positions.
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> entries;  // (col, row, src)
  entries.reserve(pattern.nnz() / 2 + n);
  chol.input_to_c_.assign(pattern.nnz(), npos);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = pattern.col_ptr()[j]; p < pattern.col_ptr()[j + 1]; ++p) {
      const std::size_t r = pinv[pattern.row_idx()[p]];
      const std::size_t c = pinv[j];
      if (r <= c) entries.emplace_back(c, r, p);
    }
  }
  std::sort(entries.begin(), entries.end());
  chol.c_ptr_.assign(n + 1, 0);
  chol.c_row_.resize(entries.size());
  chol.c_val_.assign(entries.size(), 0.0);
  for (std::size_t q = 0; q < entries.size(); ++q) {
    const auto& [c, r, src] = entries[q];
    ++chol.c_ptr_[c + 1];
    chol.c_row_[q] = r;
    chol.input_to_c_[src] = q;
  }
  for (std::size_t j = 0; j < n; ++j) chol.c_ptr_[j + 1] += chol.c_ptr_[j];

  // Elimination tree.
  chol.parent_.assign(n, npos);
  std::vector<std::size_t> ancestor(n, npos);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t p = chol.c_ptr_[k]; p < chol.c_ptr_[k + 1]; ++p) {
      std::size_t i = chol.c_row_[p];
      while (i != npos && i < k) {
        const std::size_t next = ancestor[i];
        ancestor[i] = k;
        if (next == npos) chol.parent_[i] = k;
        i = next;
      }
    }
  }

  // Column counts and row indices of L by walking every row subtree once.
  std::vector<std::size_t> stack(n), mark(n, npos), path(n);
  std::vector<std::size_t> counts(n, 1);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t top = ereach(chol.c_ptr_, chol.c_row_, k, chol.parent_, stack, mark, path);
    for (std::size_t t = top; t < n; ++t) ++counts[stack[t]];
  }
  chol.l_ptr_.assign(n + 1, 0);
  for (std::size_t j = 0; j < n; ++j) chol.l_ptr_[j + 1] = chol.l_ptr_[j] + counts[j];
  chol.l_row_.assign(chol.l_ptr_[n], 0);
  chol.l_val_.assign(chol.l_ptr_[n], 0.0);
  std::vector<std::size_t> next(chol.l_ptr_.begin(), chol.l_ptr_.end() - 1);
  std::fill(mark.begin(), mark.end(), npos);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t top = ereach(chol.c_ptr_, chol.c_row_, k, chol.parent_, stack, mark, path);
    for (std::size_t t = top; t < n; ++t) chol.l_row_[next[stack[t]]++] = k;
    chol.l_row_[next[k]++] = k;
  }
  // Diagonal first in every column: rows were appended in increasing k and
  // the diagonal (k == j) is appended before any later row.
  return chol;
}

void SparseCholesky::factorize(const SparseSymmetric& matrix) {
  if (matrix.size() != n_ || matrix.nnz() != input_to_c_.size()) {
    throw Error(ErrorKind::dimension, "matrix does not match the analyzed pattern");
  }
  factorized_ = false;
  for (std::size_t p = 0; p < input_to_c_.size(); ++p) {
    if (input_to_c_[p] != npos) c_val_[input_to_c_[p]] = matrix.values()[p];
  }
  std::vector<double> x(n_, 0.0);
  std::vector<std::size_t> next(l_ptr_.begin(), l_ptr_.end() - 1);
  std::vector<std::size_t> stack(n_), mark(n_, npos), path(n_);
  for (std::size_t k = 0; k < n_; ++k) {
    const std::size_t top = ereach(c_ptr_, c_row_, k, parent_, stack, mark, path);
    for (std::size_t p = c_ptr_[k]; p < c_ptr_[k + 1]; ++p) x[c_row_[p]] = c_val_[p];
    double d = x[k];
    x[k] = 0.0;
    for (std::size_t t = top; t < n_; ++t) {
      const std::size_t i = stack[t];
      const double lki = x[i] / l_val_[l_ptr_[i]];
      x[i] = 0.0;
      for (std::size_t p = l_ptr_[i] + 1; p < next[i]; ++p) x[l_row_[p]] -= l_val_[p] * lki;
      d -= lki * lki;
      l_val_[next[i]++] = lki;
    }
    if (!(d > 0.0)) {
      throw FactorizationError(k, "sparse Cholesky: non-positive pivot at index " +
                                      std::to_string(k));
    }
    l_val_[next[k]++] = std::sqrt(d);
  }
  factorized_ = true;
}

void SparseCholesky::solve_lower_in_place(std::span<double> b) const {
  if (b.size() != n_) throw Error(ErrorKind::dimension, "solve_lower: length mismatch");
  if (!factorized_) throw Error(ErrorKind::state, "solve_lower: matrix not factorized");
  for (std::size_t j = 0; j < n_; ++j) {
    const double diag = l_val_[l_ptr_[j]];
    if (diag == 0.0) throw Error(ErrorKind::numerical, "singular triangular solve");
    b[j] /= diag;
    const double bj = b[j];
    for (std::size_t p = l_ptr_[j] + 1; p < l_ptr_[j + 1]; ++p) b[l_row_[p]] -= l_val_[p] * bj;
  }
}

void SparseCholesky::solve_upper_in_place(std::span<double> b) const {
  if (b.size() != n_) throw Error(ErrorKind::dimension, "solve_upper: length mismatch");
  if (!factorized_) throw Error(ErrorKind::state, "solve_upper: matrix not factorized");
  for (std::size_t j = n_; j-- > 0;) {
    double s = b[j];
    for (std::size_t p = l_ptr_[j] + 1; p < l_ptr_[j + 1]; ++p) s -= l_val_[p] * b[l_row_[p]];
    const double diag = l_val_[l_ptr_[j]];
    if (diag == 0.0) throw Error(ErrorKind::numerical, "singular triangular solve");
    b[j] = s / diag;
  }
}

Eigen::VectorXd SparseCholesky::solve(const Eigen::VectorXd& b) const {
  Eigen::VectorXd x = perm_.apply(b);
  std::span<double> xs(x.data(), static_cast<std::size_t>(x.size()));
  solve_lower_in_place(xs);
  solve_upper_in_place(xs);
  return perm_.apply_transpose(x);
}

double SparseCholesky::log_det() const {
  if (!factorized_) throw Error(ErrorKind::state, "log_det: matrix not factorized");
  double s = 0.0;
  for (std::size_t j = 0; j < n_; ++j) s += std::log(l_val_[l_ptr_[j]]);
  return 2.0 * s;
}

Eigen::MatrixXd SparseCholesky::l_dense() const {
  const auto n = static_cast<Eigen::Index>(n_);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t j = 0; j < n_; ++j) {
    for (std::size_t p = l_ptr_[j]; p < l_ptr_[j + 1]; ++p) {
      out(static_cast<Eigen::Index>(l_row_[p]), static_cast<Eigen::Index>(j)) = l_val_[p];
    }
  }
  return out;
}

SparseCholesky sparse_cholesky(const SparseSymmetric& matrix, Permutation perm) {
  SparseCholesky chol = SparseCholesky::analyze(matrix, std::move(perm));
  chol.factorize(matrix);
  return chol;
}

std::size_t symbolic_factor_nnz(const SparseSymmetric& pattern, const Permutation& perm) {
  return SparseCholesky::analyze(pattern, perm).nnz();
}

Eigen::VectorXd solve_lower(const SparseCholesky& chol, const Eigen::VectorXd& b) {
  Eigen::VectorXd x = b;
  chol.solve_lower_in_place({x.data(), static_cast<std::size_t>(x.size())});
  return x;
}

Eigen::VectorXd solve_upper(const SparseCholesky& chol, const Eigen::VectorXd& b) {
  Eigen::VectorXd x = b;
  chol.solve_upper_in_place({x.data(), static_cast<std::size_t>(x.size())});
  return x;
}

double log_det_from_chol(const SparseCholesky& chol) { return chol.log_det(); }

}  // namespace nngp
