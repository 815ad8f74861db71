#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "nngp/data.hpp"
#include "nngp/marginal.hpp"
#include "nngp/mcmc.hpp"
#include "nngp/neighbor.hpp"
#include "nngp/scoring.hpp"

namespace nngp {

/// beta | sigma2 ~ N(mu, sigma2 V), sigma2 ~ IG(a, b). V must be proper.
struct ConjugatePrior {
  double a_sigma = 2.0;
  double b_sigma = 1.0;
  Eigen::VectorXd mu_beta;
  Eigen::MatrixXd v_beta;

  /// Zero-mean normal with covariance variance * I.
  static ConjugatePrior vague(std::size_t p, double variance = 1e6, double a_sigma = 2.0,
                              double b_sigma = 1.0);
  void validate(std::size_t p) const;
};

struct ConjugatePosterior {
  double a_star = 0.0;
  double b_star = 0.0;
  Eigen::VectorXd beta_mean;       // B^{-1} b
  Eigen::MatrixXd beta_cov_scale;  // B^{-1}
  double phi = 0.0;
  double alpha = 0.0;
  double nu = 0.5;

  /// E[sigma2 | y] = b* / (a* - 1).
  double sigma2_mean() const;
  /// Scale matrix (b*/a*) B^{-1} of the multivariate-t marginal of beta.
  Eigen::MatrixXd beta_t_scale() const { return (b_star / a_star) * beta_cov_scale; }
};

struct ConjugateFit {
  ConjugatePosterior posterior;
  ConjugatePrior prior;
  std::shared_ptr<const OrderedData> data;
  std::shared_ptr<const NeighborGraph> graph;
  std::shared_ptr<const NeighborIndex> index;
  std::size_t m = 15;
};

/// Exact normal-inverse-gamma posterior at fixed (phi, alpha, nu) under
/// the NNGP approximation of M = G + alpha I.
ConjugateFit fit_conjugate(const SpatialDataset& data, const ConjugatePrior& prior, double phi,
                           double alpha, double nu, const NngpOptions& options = {});

/// Posterior predictive t_{dof}(mean, scale^2) with scale^2 = b* v0 / a*.
struct ConjugatePrediction {
  double mean = 0.0;
  double scale = 0.0;
  double dof = 0.0;
  double v0 = 0.0;

  /// b* v0 / (a* - 1).
  double variance() const { return scale * scale * dof / (dof - 2.0); }
  StudentTForecast forecast() const { return {mean, scale, dof}; }
};

/// Prediction from the m nearest observed locations (m = 0 uses the fit's).
ConjugatePrediction predict_conjugate(const ConjugateFit& fit, const Point& s0,
                                      const Eigen::VectorXd& x0, std::size_t m = 0);
std::vector<ConjugatePrediction> predict_conjugate(const ConjugateFit& fit,
                                                   std::span<const Point> sites,
                                                   const Eigen::MatrixXd& X0, std::size_t m = 0);

struct CVGridSpec {
  std::vector<double> phi;
  std::vector<double> alpha;
  std::size_t folds = 5;
  std::uint64_t seed = 1;
  double nu = 0.5;

  void validate() const;
};

/// n_phi log-spaced values over the phi support and n_alpha log-spaced
/// values over [alpha_lo, alpha_hi].
CVGridSpec default_cv_grid(const Uniform& phi_support, std::size_t n_phi = 15,
                           std::size_t n_alpha = 15, double alpha_lo = 1e-3,
                           double alpha_hi = 10.0);

std::vector<double> log_spaced(double lo, double hi, std::size_t count);

struct CVGrid {
  std::vector<double> phi;
  std::vector<double> alpha;
  std::size_t folds = 0;
  Eigen::MatrixXd rmspe;  // phi x alpha
  Eigen::MatrixXd crps;
  std::vector<std::size_t> fold_of;  // per data row
  std::pair<std::size_t, std::size_t> argmin_rmspe{0, 0};
  std::pair<std::size_t, std::size_t> argmin_crps{0, 0};
};

/// K-fold cross-validation of the conjugate model over a (phi, alpha) grid.
/// Folds are drawn once; neighbor sets for each fold come from its training
/// part only. Deterministic for a fixed seed regardless of the thread count.
CVGrid cross_validate(const SpatialDataset& data, const CVGridSpec& grid,
                      const ConjugatePrior& prior, const NngpOptions& options = {});

}  // namespace nngp
