#include "nngp/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <Eigen/Cholesky>

#include "nngp/error.hpp"
#include "nngp/parallel.hpp"

namespace nngp {

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  return Rng(seq);
}

double InverseGamma::log_density(double x) const {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - rate / x;
}

BetaPrior BetaPrior::make_flat(std::size_t p) {
  BetaPrior b;
  const auto ip = static_cast<Eigen::Index>(p);
  b.mean = Eigen::VectorXd::Zero(ip);
  b.precision = Eigen::MatrixXd::Zero(ip, ip);
  b.flat = true;
  return b;
}

BetaPrior BetaPrior::make_normal(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance) {
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size())
    throw Error(ErrorKind::dimension, "beta prior covariance does not match the mean");
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::parameter_domain, "beta prior covariance is not positive definite");
  BetaPrior b;
  b.mean = std::move(mean);
  b.precision = llt.solve(Eigen::MatrixXd::Identity(covariance.rows(), covariance.cols()));
  b.precision = 0.5 * (b.precision + b.precision.transpose()).eval();
  b.flat = false;
  return b;
}

namespace {

void check_ig(const InverseGamma& g, const char* name) {
  if (!std::isfinite(g.shape) || !std::isfinite(g.rate) || g.shape <= 0.0 || g.rate <= 0.0)
    throw Error(ErrorKind::configuration,
                std::string(name) + " prior needs finite positive shape and rate");
}

void check_uniform(const Uniform& u, const char* name) {
  if (!std::isfinite(u.lower) || !std::isfinite(u.upper) || !(u.lower < u.upper))
    throw Error(ErrorKind::configuration, std::string(name) + " prior needs finite lower < upper");
}

double logit(double x, const Uniform& u) {
  const double t = (x - u.lower) / (u.upper - u.lower);
  return std::log(t) - std::log1p(-t);
}

// exp clamped to the positive finite doubles.
double positive_exp(double z) {
  return std::clamp(std::exp(z), std::numeric_limits<double>::min(),
                    std::numeric_limits<double>::max());
}

double expit(double z, const Uniform& u) {
  const double t = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  double x = u.lower + (u.upper - u.lower) * t;
  // Keep the value strictly inside the support when t rounds to 0 or 1.
  if (!(x > u.lower)) x = std::nextafter(u.lower, u.upper);
  if (!(x < u.upper)) x = std::nextafter(u.upper, u.lower);
  return x;
}

double log_uniform_jacobian(double x, const Uniform& u) {
  return std::log(x - u.lower) + std::log(u.upper - x) - std::log(u.upper - u.lower);
}

}  // namespace

void PriorSpec::validate(std::size_t p) const {
  if (static_cast<std::size_t>(beta.mean.size()) != p ||
      static_cast<std::size_t>(beta.precision.rows()) != p ||
      static_cast<std::size_t>(beta.precision.cols()) != p)
    throw Error(ErrorKind::dimension, "beta prior does not match the number of covariates");
  if (!beta.mean.allFinite() || !beta.precision.allFinite())
    throw Error(ErrorKind::configuration, "beta prior has non-finite entries");
  check_ig(sigma2, "sigma2");
  check_ig(tau2, "tau2");
  check_uniform(phi, "phi");
  if (phi.lower < 0.0) throw Error(ErrorKind::configuration, "phi prior must lie in (0, inf)");
  if (nu) {
    check_uniform(*nu, "nu");
    if (nu->lower < 0.0) throw Error(ErrorKind::configuration, "nu prior must lie in (0, inf)");
  } else if (!std::isfinite(nu_fixed) || nu_fixed <= 0.0) {
    throw Error(ErrorKind::configuration, "fixed nu must be positive");
  }
}

bool PriorSpec::in_support(const CovarianceParams& theta) const noexcept {
  if (!(theta.sigma2 > 0.0) || !(theta.tau2 > 0.0) || !std::isfinite(theta.sigma2) ||
      !std::isfinite(theta.tau2))
    return false;
  if (!phi.contains(theta.phi)) return false;
  if (nu) return nu->contains(theta.nu);
  return theta.nu == nu_fixed;
}

double PriorSpec::log_density(const CovarianceParams& theta) const {
  if (!in_support(theta)) return -std::numeric_limits<double>::infinity();
  double lp = sigma2.log_density(theta.sigma2) + tau2.log_density(theta.tau2) -
              std::log(phi.upper - phi.lower);
  if (nu) lp -= std::log(nu->upper - nu->lower);
  return lp;
}

CovarianceProposal::CovarianceProposal(const PriorSpec& priors, double initial_step,
                                       double target_acceptance)
    : priors_(priors), dim_(priors.nu ? 4 : 3), target_(target_acceptance) {
  if (!(initial_step >= 0.0) || !std::isfinite(initial_step))
    throw Error(ErrorKind::configuration, "proposal step must be finite and non-negative");
  const auto d = static_cast<Eigen::Index>(dim_);
  chol_ = Eigen::MatrixXd::Identity(d, d) * initial_step;
  mean_ = Eigen::VectorXd::Zero(d);
  scatter_ = Eigen::MatrixXd::Zero(d, d);
}

Eigen::VectorXd CovarianceProposal::to_unconstrained(const CovarianceParams& theta) const {
  Eigen::VectorXd z(static_cast<Eigen::Index>(dim_));
  z[0] = std::log(theta.sigma2);
  z[1] = std::log(theta.tau2);
  z[2] = logit(theta.phi, priors_.phi);
  if (priors_.nu) z[3] = logit(theta.nu, *priors_.nu);
  return z;
}

CovarianceParams CovarianceProposal::from_unconstrained(const Eigen::VectorXd& z,
                                                        const CovarianceParams& like) const {
  CovarianceParams t = like;
  t.sigma2 = positive_exp(z[0]);
  t.tau2 = positive_exp(z[1]);
  t.phi = expit(z[2], priors_.phi);
  if (priors_.nu) t.nu = expit(z[3], *priors_.nu);
  return t;
}

double CovarianceProposal::log_jacobian(const CovarianceParams& theta) const {
  double lj = std::log(theta.sigma2) + std::log(theta.tau2) +
              log_uniform_jacobian(theta.phi, priors_.phi);
  if (priors_.nu) lj += log_uniform_jacobian(theta.nu, *priors_.nu);
  return lj;
}

Proposal CovarianceProposal::propose(const CovarianceParams& current, Rng& rng) const {
  Proposal out;
  if (scale_ == 0.0 || chol_.isZero(0.0)) {
    out.candidate = current;
    return out;
  }
  std::normal_distribution<double> normal;
  Eigen::VectorXd e(static_cast<Eigen::Index>(dim_));
  for (Eigen::Index k = 0; k < e.size(); ++k) e[k] = normal(rng);
  const Eigen::VectorXd z = to_unconstrained(current) + scale_ * (chol_ * e);
  out.candidate = from_unconstrained(z, current);
  out.log_jacobian_ratio = log_jacobian(out.candidate) - log_jacobian(current);
  return out;
}

void CovarianceProposal::adapt(const CovarianceParams& state, bool accepted) {
  if (frozen_) return;
  ++updates_;
  const double gain = std::pow(static_cast<double>(updates_) + 10.0, -0.6);
  scale_ *= std::exp(gain * ((accepted ? 1.0 : 0.0) - target_));
  scale_ = std::clamp(scale_, 1e-4, 1e2);

  // Running mean and scatter of the unconstrained chain.
  const Eigen::VectorXd z = to_unconstrained(state);
  ++tracked_;
  const Eigen::VectorXd delta = z - mean_;
  mean_ += delta / static_cast<double>(tracked_);
  scatter_ += delta * (z - mean_).transpose();
  if (tracked_ >= 200 && tracked_ % 100 == 0) refresh_shape();
}

void CovarianceProposal::refresh_shape() {
  const auto d = static_cast<Eigen::Index>(dim_);
  Eigen::MatrixXd cov = scatter_ / static_cast<double>(tracked_ - 1);
  cov += 1e-8 * Eigen::MatrixXd::Identity(d, d);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) return;
  // First switch from the diagonal start to the empirical shape: restart the
  // scale at the Gaussian-optimal 2.38/sqrt(d).
  if (tracked_ == 200) scale_ = 2.38 / std::sqrt(static_cast<double>(d));
  chol_ = llt.matrixL();
}

bool mh_accept(double log_post_current, double log_post_candidate, double log_jacobian_ratio,
               Rng& rng) {
  if (std::isnan(log_post_current) || std::isnan(log_post_candidate) ||
      std::isnan(log_jacobian_ratio))
    throw Error(ErrorKind::numerical, "log posterior is NaN");
  if (log_post_candidate == -std::numeric_limits<double>::infinity()) return false;
  const double delta = log_post_candidate - log_post_current + log_jacobian_ratio;
  if (delta >= 0.0) return true;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return std::log(unif(rng)) < delta;
}

double gelman_rubin(const std::vector<std::vector<double>>& chains) {
  const std::size_t k = chains.size();
  if (k < 2) throw Error(ErrorKind::configuration, "PSRF needs at least two chains");
  const std::size_t n = chains.front().size();
  if (n < 10) throw Error(ErrorKind::configuration, "PSRF needs chains of length >= 10");
  for (const auto& c : chains)
    if (c.size() != n) throw Error(ErrorKind::dimension, "PSRF chains differ in length");

  std::vector<double> means(k), vars(k);
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (double v : chains[j]) s += v;
    means[j] = s / static_cast<double>(n);
    double ss = 0.0;
    for (double v : chains[j]) ss += (v - means[j]) * (v - means[j]);
    vars[j] = ss / static_cast<double>(n - 1);
  }
  double grand = 0.0;
  for (double m : means) grand += m;
  grand /= static_cast<double>(k);
  double b = 0.0;
  for (double m : means) b += (m - grand) * (m - grand);
  b *= static_cast<double>(n) / static_cast<double>(k - 1);
  double w = 0.0;
  for (double v : vars) w += v;
  w /= static_cast<double>(k);
  if (!(w > 0.0)) throw Error(ErrorKind::numerical, "PSRF undefined: zero within-chain variance");
  const double nn = static_cast<double>(n);
  return std::sqrt(((nn - 1.0) / nn * w + b / nn) / w);
}

void McmcConfig::validate() const {
  if (n_chains < 1) throw Error(ErrorKind::configuration, "need at least one chain");
  if (n_iter < 1) throw Error(ErrorKind::configuration, "need at least one iteration");
  if (burn_in >= n_iter) throw Error(ErrorKind::configuration, "burn-in must be below n_iter");
  if (thin < 1) throw Error(ErrorKind::configuration, "thin must be >= 1");
  if ((n_iter - burn_in) % thin != 0)
    throw Error(ErrorKind::configuration, "thin must divide the post-burn-in length");
  if (!seeds.empty()) {
    if (seeds.size() != n_chains)
      throw Error(ErrorKind::configuration, "one seed per chain is required");
    std::vector<std::uint64_t> s = seeds;
    std::sort(s.begin(), s.end());
    if (std::adjacent_find(s.begin(), s.end()) != s.end())
      throw Error(ErrorKind::configuration, "chain seeds must be distinct");
  }
}

std::vector<std::uint64_t> McmcConfig::chain_seeds() const {
  if (!seeds.empty()) return seeds;
  std::vector<std::uint64_t> out(n_chains);
  for (std::size_t c = 0; c < n_chains; ++c)
    out[c] = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(c);
  return out;
}

std::size_t PosteriorSamples::retained_per_chain() const noexcept {
  return chains.empty() ? 0 : static_cast<std::size_t>(chains.front().rows());
}

std::size_t PosteriorSamples::column(const std::string& name) const {
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == name) return j;
  throw Error(ErrorKind::configuration, "no sampled parameter named " + name);
}

Eigen::VectorXd PosteriorSamples::draw(std::size_t k) const {
  const std::size_t per = retained_per_chain();
  return chains[k / per].row(static_cast<Eigen::Index>(k % per)).transpose();
}

Eigen::VectorXd PosteriorSamples::pooled(std::size_t col) const {
  const std::size_t per = retained_per_chain();
  Eigen::VectorXd out(static_cast<Eigen::Index>(per * chains.size()));
  for (std::size_t c = 0; c < chains.size(); ++c)
    out.segment(static_cast<Eigen::Index>(c * per), static_cast<Eigen::Index>(per)) =
        chains[c].col(static_cast<Eigen::Index>(col));
  return out;
}

std::vector<std::vector<double>> PosteriorSamples::per_chain(std::size_t col) const {
  std::vector<std::vector<double>> out;
  for (const auto& m : chains) {
    const auto c = m.col(static_cast<Eigen::Index>(col));
    out.emplace_back(c.data(), c.data() + c.size());
  }
  return out;
}

PosteriorSamples run_chains(const KernelFactory& make_kernel, const McmcConfig& config) {
  config.validate();
  const std::size_t nc = config.n_chains;
  const auto seeds = config.chain_seeds();
  const std::size_t kept = (config.n_iter - config.burn_in) / config.thin;

  PosteriorSamples out;
  out.n_iter = config.n_iter;
  out.burn_in = config.burn_in;
  out.thin = config.thin;
  out.seeds = seeds;
  out.chains.resize(nc);
  out.acceptance.assign(nc, 0.0);
  std::vector<std::vector<std::string>> names(nc);
  std::vector<std::exception_ptr> errors(nc);

  const int budget = std::max(1, config.threads);
  const std::size_t concurrent = std::min<std::size_t>(nc, static_cast<std::size_t>(budget));
  const int inner = std::max(1, budget / static_cast<int>(concurrent));

  auto run_one = [&](std::size_t c) {
    ThreadBudgetScope scope(inner);
    std::size_t it = 0;
    try {
      Rng rng = make_rng(seeds[c], c);
      auto kernel = make_kernel(c, rng);
      names[c] = kernel->parameter_names();
      const auto np = static_cast<Eigen::Index>(names[c].size());
      Eigen::MatrixXd draws(static_cast<Eigen::Index>(kept), np);
      std::vector<double> row(static_cast<std::size_t>(np));
      std::size_t r = 0;
      for (it = 0; it < config.n_iter; ++it) {
        if (it == config.burn_in) kernel->reset_acceptance();
        kernel->step(rng, it < config.burn_in);
        if (it >= config.burn_in && (it - config.burn_in + 1) % config.thin == 0) {
          kernel->record(row);
          for (Eigen::Index j = 0; j < np; ++j) draws(static_cast<Eigen::Index>(r), j) = row[j];
          ++r;
        }
      }
      out.acceptance[c] = kernel->acceptance_rate();
      out.chains[c] = std::move(draws);
    } catch (const FactorizationError& e) {
      std::ostringstream msg;
      msg << "chain " << c << " iteration " << it << ": " << e.what();
      errors[c] = std::make_exception_ptr(FactorizationError(e.index(), msg.str()));
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "chain " << c << " iteration " << it << ": " << e.what();
      errors[c] = std::make_exception_ptr(Error(e.kind(), msg.str()));
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };

  if (concurrent <= 1) {
    for (std::size_t c = 0; c < nc; ++c) run_one(c);
  } else {
    std::size_t next = 0;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < concurrent; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t c;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next >= nc) return;
            c = next++;
          }
          run_one(c);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  out.names = names.front();
  return out;
}

}  // namespace nngp
