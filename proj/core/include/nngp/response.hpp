#pragma once

#include <memory>
#include <span>

#include <Eigen/Core>

#include "nngp/marginal.hpp"
#include "nngp/nn_factor.hpp"

namespace nngp {

/// NNGP applied directly to y: K is the neighbor-restricted version of
/// C + tau2 I.
class ResponseBackend : public MarginalBackend {
 public:
  ResponseBackend(std::shared_ptr<const OrderedData> data,
                  std::shared_ptr<const NeighborGraph> graph, double jitter = 0.0);

  void prepare(const CovarianceParams& theta) override;
  double log_det() const override { return log_det_; }
  const Eigen::MatrixXd& gram() const override { return gram_; }
  double quad(const Eigen::VectorXd& r) const override;
  std::unique_ptr<MarginalBackend> fresh() const override;

  const NNFactor& factor() const noexcept { return factor_; }

 private:
  std::shared_ptr<const OrderedData> data_;
  Eigen::MatrixXd xy_;  // [X y]
  double jitter_;
  NNFactor factor_;
  double log_det_ = 0.0;
  Eigen::MatrixXd gram_;
};

struct ResponseFit : MarginalFit {};

ResponseFit fit_response(const SpatialDataset& data, const PriorSpec& priors,
                         const NngpOptions& options, const McmcConfig& mcmc);

/// Rebuilds a fit around existing samples, e.g. ones read back from disk.
ResponseFit response_fit_from_samples(const SpatialDataset& data, const PriorSpec& priors,
                                      const NngpOptions& options, PosteriorSamples samples);

/// log N(y | X beta, Sigma~) at fixed parameters.
double response_log_likelihood(const SpatialDataset& data, const CovarianceParams& theta,
                               const Eigen::VectorXd& beta, const NngpOptions& options = {});

/// Kriging from the m nearest observed locations for every retained draw
/// (every stride-th): mean x0'beta + c' S0^{-1} (y_N - X_N beta), variance
/// sigma2 + tau2 - c' S0^{-1} c, where S0 includes the nugget and c does not.
PredictiveDraws predict_response(const ResponseFit& fit, std::span<const Point> sites,
                                 const Eigen::MatrixXd& X0, const PredictOptions& options = {});

}  // namespace nngp
