#pragma once

#include <memory>
#include <span>

#include <Eigen/Core>

#include "nngp/marginal.hpp"
#include "nngp/nn_factor.hpp"
#include "nngp/sparse.hpp"

namespace nngp {

/// Parameter-independent pieces of the collapsed model: the pattern of
/// Omega = Ctilde^{-1} + tau^{-2} I, its fill-reducing permutation and the
/// symbolic Cholesky analysis. Built once per fit.
class CollapsedStructure {
 public:
  CollapsedStructure(std::shared_ptr<const NeighborGraph> graph, OrderingMethod method);

  const std::shared_ptr<const NeighborGraph>& graph() const noexcept { return graph_; }
  const PrecisionAssembler& assembler() const noexcept { return assembler_; }
  const SparseCholesky& symbolic() const noexcept { return symbolic_; }
  const Permutation& permutation() const noexcept { return symbolic_.permutation(); }
  OrderingMethod method() const noexcept { return method_; }

 private:
  std::shared_ptr<const NeighborGraph> graph_;
  OrderingMethod method_;
  PrecisionAssembler assembler_;
  SparseCholesky symbolic_;
};

/// Marginal model y ~ N(X beta, Lambda), Lambda = Ctilde + tau2 I, evaluated
/// through Omega:
///   Lambda^{-1} = tau^{-2} I - tau^{-4} Omega^{-1}
///   log det Lambda = n log tau2 + log det Ctilde + log det Omega.
class CollapsedBackend : public MarginalBackend {
 public:
  CollapsedBackend(std::shared_ptr<const OrderedData> data,
                   std::shared_ptr<const CollapsedStructure> structure, double jitter = 0.0);

  void prepare(const CovarianceParams& theta) override;
  double log_det() const override { return log_det_; }
  const Eigen::MatrixXd& gram() const override { return gram_; }
  double quad(const Eigen::VectorXd& r) const override;
  std::unique_ptr<MarginalBackend> fresh() const override;

  /// Lambda^{-1} v through the identity above (ordered indexing).
  Eigen::VectorXd apply_inverse(const Eigen::VectorXd& v) const;
  double log_det_ctilde() const noexcept { return log_det_c_; }
  double log_det_omega() const noexcept { return chol_.log_det(); }
  double tau2() const noexcept { return tau2_; }
  const NNFactor& factor() const noexcept { return factor_; }
  const SparseCholesky& cholesky() const noexcept { return chol_; }
  const SparseSymmetric& omega() const noexcept { return omega_; }

  /// w | y, beta, theta ~ N(Omega^{-1} r / tau2, Omega^{-1}) with r the
  /// residual, drawn as P^T L^{-T}(u / tau2 + z), u = L^{-1} P r. Passing
  /// z = 0 gives the conditional mean. Ordered indexing.
  Eigen::VectorXd latent(const Eigen::VectorXd& residual, const Eigen::VectorXd& z) const;

 private:
  std::shared_ptr<const OrderedData> data_;
  std::shared_ptr<const CollapsedStructure> structure_;
  Eigen::MatrixXd xy_;     // [X y]
  Eigen::MatrixXd xy_xy_;  // [X y]^T [X y]
  double jitter_;
  NNFactor factor_;
  SparseSymmetric omega_;
  SparseCholesky chol_;
  double tau2_ = 1.0;
  double log_det_c_ = 0.0;
  double log_det_ = 0.0;
  Eigen::MatrixXd gram_;
};

struct CollapsedFit : MarginalFit {
  std::shared_ptr<const CollapsedStructure> structure;
};

CollapsedFit fit_collapsed(const SpatialDataset& data, const PriorSpec& priors,
                           const NngpOptions& options, const McmcConfig& mcmc);

/// Rebuilds a fit around existing samples, e.g. ones read back from disk.
CollapsedFit collapsed_fit_from_samples(const SpatialDataset& data, const PriorSpec& priors,
                                        const NngpOptions& options, PosteriorSamples samples);

/// log N(y | X beta, Ctilde + tau2 I) at fixed parameters.
double collapsed_log_likelihood(const SpatialDataset& data, const CovarianceParams& theta,
                                const Eigen::VectorXd& beta, const NngpOptions& options = {});

/// One draw of w | y for retained draw `draw`, in the dataset's row order.
/// The factorization is regenerated from the stored parameters.
Eigen::VectorXd recover_w(const CollapsedFit& fit, std::size_t draw, Rng& rng);
/// Conditional mean of w | y at retained draw `draw` (the z = 0 case).
Eigen::VectorXd recover_w_mean(const CollapsedFit& fit, std::size_t draw);

/// Per used draw: sample w, krige w(s0) from its m nearest observed
/// locations with C (no nugget) and add x0'beta and the nugget.
PredictiveDraws predict_collapsed(const CollapsedFit& fit, std::span<const Point> sites,
                                  const Eigen::MatrixXd& X0, const PredictOptions& options = {});

}  // namespace nngp
