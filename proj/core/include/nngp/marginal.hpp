#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nngp/covariance.hpp"
#include "nngp/data.hpp"
#include "nngp/mcmc.hpp"
#include "nngp/neighbor.hpp"
#include "nngp/scoring.hpp"
#include "nngp/sparse.hpp"

namespace nngp {

struct NngpOptions {
  std::size_t m = 15;
  OrderingStrategy ordering = OrderingStrategy::coord_sum;
  std::vector<std::size_t> given_order;  // used with OrderingStrategy::given
  /// Fill-reducing ordering of the collapsed model's sparse precision.
  OrderingMethod fill_ordering = OrderingMethod::approximate_minimum_degree;
  /// Diagonal jitter added to every neighbor block (default none).
  double jitter = 0.0;
  /// Initial random-walk step on the unconstrained scale.
  double initial_step = 0.1;

  void validate() const;
};

/// Training data rearranged into the neighbor ordering.
struct OrderedData {
  std::vector<Point> coords;
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<std::size_t> order;  // order[k] = original row of ordered row k
  std::vector<std::string> covariate_names;

  static OrderedData from(const SpatialDataset& data, std::span<const std::size_t> order);
  std::size_t size() const noexcept { return coords.size(); }
  std::size_t n_covariates() const noexcept { return static_cast<std::size_t>(X.cols()); }
};

/// Checks n >= p + 1 and full column rank; throws configuration error.
void check_design(const Eigen::MatrixXd& X);

struct OrderedProblem {
  std::shared_ptr<const OrderedData> data;
  std::shared_ptr<const NeighborGraph> graph;
};

/// Validates the inputs, orders the locations and builds the neighbor graph.
OrderedProblem prepare_problem(const SpatialDataset& data, const NngpOptions& options);

/// Gaussian marginal likelihood y ~ N(X beta, K(theta)) with a sparse
/// representation of K. prepare() computes log det K and the Gram matrix
/// [X y]^T K^{-1} [X y], which is all the sampler needs per iteration.
class MarginalBackend {
 public:
  virtual ~MarginalBackend() = default;

  /// Refactors for theta. Throws FactorizationError on failure.
  virtual void prepare(const CovarianceParams& theta) = 0;
  virtual double log_det() const = 0;
  /// (p+1) x (p+1) Gram matrix of [X y] under K^{-1}.
  virtual const Eigen::MatrixXd& gram() const = 0;
  /// r^T K^{-1} r evaluated directly.
  virtual double quad(const Eigen::VectorXd& r) const = 0;
  /// A backend sharing the immutable structure but none of the numeric state.
  virtual std::unique_ptr<MarginalBackend> fresh() const = 0;

  std::size_t size() const noexcept { return n_; }

 protected:
  explicit MarginalBackend(std::size_t n) : n_(n) {}

 private:
  std::size_t n_;
};

/// log N(y | X beta, K) from a prepared backend, via the direct quadratic form.
double log_likelihood(const MarginalBackend& backend, const Eigen::VectorXd& residual);

/// Same through the cached Gram matrix; O(p^2).
double log_likelihood_from_gram(const MarginalBackend& backend, const Eigen::VectorXd& beta);

/// Dispersed starting point: OLS beta, variances splitting the residual
/// variance at random, phi log-uniform inside its prior support.
ChainState initial_state(const OrderedData& data, const PriorSpec& priors, Rng& rng);

/// Gibbs update of beta followed by one joint MH update of the covariance
/// parameters. Two backends alternate so each iteration costs exactly one
/// factorization; the candidate becomes current on acceptance.
class MarginalSampler : public ChainKernel {
 public:
  MarginalSampler(std::shared_ptr<const OrderedData> data, PriorSpec priors,
                  std::unique_ptr<MarginalBackend> backend, ChainState start,
                  double initial_step = 0.1);

  std::vector<std::string> parameter_names() const override;
  void step(Rng& rng, bool adapting) override;
  void record(std::span<double> out) const override;
  double acceptance_rate() const override;
  void reset_acceptance() override;

  const ChainState& state() const noexcept { return state_; }
  const CovarianceProposal& proposal() const noexcept { return proposal_; }

 private:
  std::shared_ptr<const OrderedData> data_;
  PriorSpec priors_;
  std::unique_ptr<MarginalBackend> current_;
  std::unique_ptr<MarginalBackend> candidate_;
  CovarianceProposal proposal_;
  ChainState state_;
  std::size_t proposed_ = 0;
  std::size_t accepted_ = 0;
};

/// Parameter names in sampler column order: beta0..beta{p-1}, sigma2, tau2,
/// phi and nu when it is sampled.
std::vector<std::string> marginal_parameter_names(std::size_t p, bool sample_nu);

/// Shared result of the response and collapsed fits.
struct MarginalFit {
  std::shared_ptr<const OrderedData> data;
  std::shared_ptr<const NeighborGraph> graph;
  PriorSpec priors;
  NngpOptions options;
  McmcConfig mcmc;
  PosteriorSamples samples;
  double seconds = 0.0;

  std::size_t n_draws() const noexcept { return samples.total_retained(); }
  Eigen::VectorXd beta(std::size_t draw) const;
  CovarianceParams theta(std::size_t draw) const;
};

struct PredictOptions {
  /// Use every stride-th retained draw.
  std::size_t stride = 1;
  std::uint64_t seed = 1;
  std::size_t m = 0;  // 0 means the fit's m
};

/// Per-site, per-draw predictive output.
struct PredictiveDraws {
  Eigen::MatrixXd mean;         // conditional mean, sites x draws
  Eigen::MatrixXd sd;           // conditional sd
  Eigen::MatrixXd realization;  // one predictive draw per (site, draw)

  std::size_t n_sites() const noexcept { return static_cast<std::size_t>(mean.rows()); }
  std::vector<Forecast> forecasts() const;
  std::vector<PredictiveSummary> summaries() const;
};

}  // namespace nngp
