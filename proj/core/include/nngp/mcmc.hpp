#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nngp/covariance.hpp"

namespace nngp {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream); distinct streams never share
/// state even for equal seeds.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

/// Standard normal draw source bound to an engine.
class NormalSource {
 public:
  explicit NormalSource(Rng& rng) : rng_(&rng) {}
  double operator()() { return dist_(*rng_); }

 private:
  Rng* rng_;
  std::normal_distribution<double> dist_;
};

struct InverseGamma {
  double shape = 2.0;
  double rate = 1.0;

  double log_density(double x) const;
};

struct Uniform {
  double lower = 0.0;
  double upper = 1.0;

  bool contains(double x) const noexcept { return x > lower && x < upper; }
};

/// Normal prior on the regression coefficients, or flat (zero precision).
struct BetaPrior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;  // V^{-1}; zero for the flat prior
  bool flat = true;

  static BetaPrior make_flat(std::size_t p);
  static BetaPrior make_normal(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance);
};

struct PriorSpec {
  BetaPrior beta;
  InverseGamma sigma2{2.0, 1.0};
  InverseGamma tau2{2.0, 1.0};
  Uniform phi{3.0, 300.0};
  std::optional<Uniform> nu;  // sampled when set, otherwise fixed at nu_fixed
  double nu_fixed = 0.5;

  void validate(std::size_t p) const;
  bool in_support(const CovarianceParams& theta) const noexcept;
  /// Log prior density of the covariance block (sigma2, tau2, phi[, nu]).
  double log_density(const CovarianceParams& theta) const;
};

struct ChainState {
  Eigen::VectorXd beta;
  CovarianceParams theta;
  std::size_t iteration = 0;
  std::uint64_t stream = 0;
};

struct Proposal {
  CovarianceParams candidate;
  double log_jacobian_ratio = 0.0;
};

/// Joint random-walk proposal for (sigma2, tau2, phi[, nu]) on the
/// unconstrained scale: log for variances, logit((x - l)/(u - l)) for
/// uniform-supported parameters. During burn-in the step scale follows a
/// Robbins-Monro recursion towards the target acceptance rate and the shape
/// tracks the empirical covariance of the chain; freeze() stops both.
class CovarianceProposal {
 public:
  CovarianceProposal(const PriorSpec& priors, double initial_step = 0.1,
                     double target_acceptance = 0.35);

  std::size_t dimension() const noexcept { return dim_; }
  bool frozen() const noexcept { return frozen_; }
  double scale() const noexcept { return scale_; }
  double target_acceptance() const noexcept { return target_; }

  Eigen::VectorXd to_unconstrained(const CovarianceParams& theta) const;
  CovarianceParams from_unconstrained(const Eigen::VectorXd& z,
                                      const CovarianceParams& like) const;
  /// log |d theta / d z| at theta.
  double log_jacobian(const CovarianceParams& theta) const;

  Proposal propose(const CovarianceParams& current, Rng& rng) const;

  /// Feeds one MH outcome; `state` is the chain value after the decision.
  void adapt(const CovarianceParams& state, bool accepted);
  void freeze() noexcept { frozen_ = true; }

  /// Overrides the step scale (a zero scale proposes the current value).
  void set_scale(double s) noexcept { scale_ = s; }

 private:
  void refresh_shape();

  PriorSpec priors_;
  std::size_t dim_;
  double target_;
  double scale_ = 1.0;
  Eigen::MatrixXd chol_;  // lower Cholesky factor of the proposal shape
  bool frozen_ = false;
  std::size_t updates_ = 0;
  std::size_t tracked_ = 0;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd scatter_;
};

/// Metropolis-Hastings decision. Throws numerical Error on a NaN log
/// posterior; a -inf candidate is always rejected.
bool mh_accept(double log_post_current, double log_post_candidate,
               double log_jacobian_ratio, Rng& rng);

/// Potential scale reduction factor sqrt(((n-1)/n W + B/n) / W) for one
/// parameter. Needs >= 2 chains of equal length >= 10.
double gelman_rubin(const std::vector<std::vector<double>>& chains);

struct McmcConfig {
  std::size_t n_chains = 3;
  std::size_t n_iter = 25000;
  std::size_t burn_in = 15000;
  std::size_t thin = 1;
  std::uint64_t seed = 1;
  /// Explicit per-chain seeds; derived from `seed` when empty.
  std::vector<std::uint64_t> seeds;
  /// Total thread budget shared by the chains.
  int threads = 1;

  void validate() const;
  std::vector<std::uint64_t> chain_seeds() const;
};

struct PosteriorSamples {
  std::vector<std::string> names;
  /// One matrix per chain: retained draws by parameter.
  std::vector<Eigen::MatrixXd> chains;
  std::size_t n_iter = 0;
  std::size_t burn_in = 0;
  std::size_t thin = 1;
  std::vector<std::uint64_t> seeds;
  std::vector<double> acceptance;  // post-burn-in MH acceptance per chain

  std::size_t n_chains() const noexcept { return chains.size(); }
  std::size_t retained_per_chain() const noexcept;
  std::size_t total_retained() const noexcept { return retained_per_chain() * n_chains(); }
  /// Column index of a parameter; throws configuration error if absent.
  std::size_t column(const std::string& name) const;
  /// Draw `k` counted across chains in chain-major order.
  Eigen::VectorXd draw(std::size_t k) const;
  Eigen::VectorXd pooled(std::size_t col) const;
  std::vector<std::vector<double>> per_chain(std::size_t col) const;
};

/// One Markov chain. The kernel owns its state.
class ChainKernel {
 public:
  virtual ~ChainKernel() = default;
  virtual std::vector<std::string> parameter_names() const = 0;
  /// Advances one iteration; `adapting` is true during burn-in only.
  virtual void step(Rng& rng, bool adapting) = 0;
  virtual void record(std::span<double> out) const = 0;
  /// Fraction of accepted MH proposals since the last reset.
  virtual double acceptance_rate() const { return 1.0; }
  virtual void reset_acceptance() {}
};

using KernelFactory = std::function<std::unique_ptr<ChainKernel>(std::size_t chain, Rng& rng)>;

/// Runs independent chains, concurrently when the thread budget allows.
/// Output depends only on the seeds, never on the thread count. A failure in
/// any chain is rethrown with the chain and iteration prepended.
PosteriorSamples run_chains(const KernelFactory& make_kernel, const McmcConfig& config);

}  // namespace nngp
