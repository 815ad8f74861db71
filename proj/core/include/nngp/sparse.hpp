#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace nngp {

/// Symmetric matrix in compressed sparse column form storing both triangles.
/// Row indices within a column are sorted and every diagonal entry is present.
class SparseSymmetric {
 public:
  SparseSymmetric() = default;
  SparseSymmetric(std::size_t n, std::vector<std::size_t> col_ptr,
                  std::vector<std::size_t> row_idx, std::vector<double> values);

  std::size_t size() const noexcept { return n_; }
  std::size_t nnz() const noexcept { return row_idx_.size(); }

  const std::vector<std::size_t>& col_ptr() const noexcept { return col_ptr_; }
  const std::vector<std::size_t>& row_idx() const noexcept { return row_idx_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }

  /// Position of entry (i, j) in values(), or nnz() if structurally zero.
  std::size_t find(std::size_t i, std::size_t j) const noexcept;
  double coeff(std::size_t i, std::size_t j) const noexcept;

  Eigen::MatrixXd to_dense() const;
  /// Throws dimension error if the pattern is not structurally symmetric or
  /// a diagonal entry is missing.
  void validate_structure() const;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> col_ptr_{0};
  std::vector<std::size_t> row_idx_;
  std::vector<double> values_;
};

/// Symmetric permutation: forward()[k] is the original index placed at
/// position k, inverse()[i] is the position of original index i.
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<std::size_t> forward);
  static Permutation identity(std::size_t n);

  std::size_t size() const noexcept { return forward_.size(); }
  const std::vector<std::size_t>& forward() const noexcept { return forward_; }
  const std::vector<std::size_t>& inverse() const noexcept { return inverse_; }

  /// out[k] = x[forward[k]], i.e. P x.
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  /// out[forward[k]] = x[k], i.e. P^T x.
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& x) const;

 private:
  std::vector<std::size_t> forward_;
  std::vector<std::size_t> inverse_;
};

enum class OrderingMethod {
  natural,                    // identity
  approximate_minimum_degree,
  reverse_cuthill_mckee,
};

std::string_view to_string(OrderingMethod method) noexcept;
OrderingMethod ordering_method_from_string(std::string_view name);

/// Fill-reducing symmetric ordering of the pattern. Deterministic for a fixed
/// input; only the pattern (not the values) is read. A diagonal pattern yields
/// the identity for every method.
Permutation fill_reducing_permutation(const SparseSymmetric& pattern,
                                      OrderingMethod method = OrderingMethod::approximate_minimum_degree);

/// Simplicial Cholesky L L^T = P A P^T. The symbolic analysis depends only on
/// the pattern and the permutation and is reused by every factorize() call.
class SparseCholesky {
 public:
  SparseCholesky() = default;

  /// Symbolic analysis: elimination tree, column counts, and the scatter map
  /// from the input pattern into the permuted upper triangle.
  static SparseCholesky analyze(const SparseSymmetric& pattern, Permutation perm);

  /// Numeric factorization of a matrix with the analyzed pattern. Throws
  /// FactorizationError with the (permuted) pivot index on failure.
  void factorize(const SparseSymmetric& matrix);

  std::size_t size() const noexcept { return n_; }
  /// Structural nonzeros of L including the diagonal.
  std::size_t nnz() const noexcept { return l_row_.size(); }
  const Permutation& permutation() const noexcept { return perm_; }
  bool factorized() const noexcept { return factorized_; }

  const std::vector<std::size_t>& col_ptr() const noexcept { return l_ptr_; }
  const std::vector<std::size_t>& row_idx() const noexcept { return l_row_; }
  const std::vector<double>& values() const noexcept { return l_val_; }

  /// Solves L x = b in the permuted ordering, in place.
  void solve_lower_in_place(std::span<double> b) const;
  /// Solves L^T x = b in the permuted ordering, in place.
  void solve_upper_in_place(std::span<double> b) const;
  /// A^{-1} b in the original ordering.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;

  /// log det(P A P^T) = 2 sum log L[i,i].
  double log_det() const;

  Eigen::MatrixXd l_dense() const;

 private:
  std::size_t n_ = 0;
  Permutation perm_;
  std::vector<std::size_t> parent_;
  // Upper triangle of P A P^T, column-compressed, and the map from the input
  // value array into it (npos where the entry lies in the lower triangle).
  std::vector<std::size_t> c_ptr_;
  std::vector<std::size_t> c_row_;
  std::vector<std::size_t> input_to_c_;
  std::vector<double> c_val_;
  std::vector<std::size_t> l_ptr_;
  std::vector<std::size_t> l_row_;
  std::vector<double> l_val_;
  bool factorized_ = false;
};

/// analyze + factorize.
SparseCholesky sparse_cholesky(const SparseSymmetric& matrix, Permutation perm);

/// Number of nonzeros in L for this pattern under `perm`, without numeric work.
std::size_t symbolic_factor_nnz(const SparseSymmetric& pattern, const Permutation& perm);

Eigen::VectorXd solve_lower(const SparseCholesky& chol, const Eigen::VectorXd& b);
Eigen::VectorXd solve_upper(const SparseCholesky& chol, const Eigen::VectorXd& b);
double log_det_from_chol(const SparseCholesky& chol);

}  // namespace nngp
