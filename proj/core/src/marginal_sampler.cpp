#include "nngp/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "nngp/error.hpp"

namespace nngp {

void NngpOptions::validate() const {
  if (m < 1) throw Error(ErrorKind::configuration, "m must be at least 1");
  if (!(jitter >= 0.0) || !std::isfinite(jitter))
    throw Error(ErrorKind::configuration, "jitter must be finite and non-negative");
  if (!(initial_step >= 0.0) || !std::isfinite(initial_step))
    throw Error(ErrorKind::configuration, "initial step must be finite and non-negative");
}

OrderedData OrderedData::from(const SpatialDataset& data, std::span<const std::size_t> order) {
  OrderedData o;
  const auto n = static_cast<Eigen::Index>(order.size());
  o.coords.resize(order.size());
  o.y.resize(n);
  o.X.resize(n, data.X.cols());
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto i = order[static_cast<std::size_t>(k)];
    o.coords[static_cast<std::size_t>(k)] = data.coords[i];
    o.y[k] = data.y[static_cast<Eigen::Index>(i)];
    o.X.row(k) = data.X.row(static_cast<Eigen::Index>(i));
  }
  o.order.assign(order.begin(), order.end());
  o.covariate_names = data.covariate_names;
  return o;
}

void check_design(const Eigen::MatrixXd& X) {
  if (X.rows() < X.cols() + 1)
    throw Error(ErrorKind::configuration, "need n >= p + 1 observations");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols())
    throw Error(ErrorKind::configuration, "design matrix is rank deficient");
}

OrderedProblem prepare_problem(const SpatialDataset& data, const NngpOptions& options) {
  options.validate();
  data.validate();
  check_design(data.X);
  auto graph = std::make_shared<const NeighborGraph>(
      build_neighbor_graph(data.coords, options.m, options.ordering, options.given_order));
  auto ordered = std::make_shared<const OrderedData>(OrderedData::from(data, graph->order()));
  return {std::move(ordered), std::move(graph)};
}

double log_likelihood(const MarginalBackend& backend, const Eigen::VectorXd& residual) {
  const double n = static_cast<double>(backend.size());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + backend.log_det() + backend.quad(residual));
}

double log_likelihood_from_gram(const MarginalBackend& backend, const Eigen::VectorXd& beta) {
  const Eigen::MatrixXd& g = backend.gram();
  const Eigen::Index p = beta.size();
  const double q = g(p, p) - 2.0 * beta.dot(g.col(p).head(p)) +
                   beta.dot(g.topLeftCorner(p, p) * beta);
  const double n = static_cast<double>(backend.size());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + backend.log_det() + q);
}

ChainState initial_state(const OrderedData& data, const PriorSpec& priors, Rng& rng) {
  ChainState s;
  s.beta = data.X.colPivHouseholderQr().solve(data.y);
  const Eigen::VectorXd r = data.y - data.X * s.beta;
  const double dof = static_cast<double>(std::max<Eigen::Index>(1, r.size() - s.beta.size()));
  double s2 = r.squaredNorm() / dof;
  if (!(s2 > 0.0)) s2 = 1.0;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double split = 0.2 + 0.6 * unif(rng);
  s.theta.sigma2 = s2 * split;
  s.theta.tau2 = s2 * (1.0 - split);
  // Log-uniform over the prior support, kept away from the edges.
  const double lo = std::log(std::max(priors.phi.lower, 1e-12));
  const double hi = std::log(priors.phi.upper);
  const double pad = 0.05 * (hi - lo);
  s.theta.phi = std::clamp(std::exp(lo + pad + (hi - lo - 2.0 * pad) * unif(rng)),
                           std::nextafter(priors.phi.lower, priors.phi.upper),
                           std::nextafter(priors.phi.upper, priors.phi.lower));
  if (priors.nu)
    s.theta.nu = priors.nu->lower + (0.25 + 0.5 * unif(rng)) * (priors.nu->upper - priors.nu->lower);
  else
    s.theta.nu = priors.nu_fixed;
  return s;
}

std::vector<std::string> marginal_parameter_names(std::size_t p, bool sample_nu) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < p; ++j) names.push_back("beta" + std::to_string(j));
  names.insert(names.end(), {"sigma2", "tau2", "phi"});
  if (sample_nu) names.emplace_back("nu");
  return names;
}

MarginalSampler::MarginalSampler(std::shared_ptr<const OrderedData> data, PriorSpec priors,
                                 std::unique_ptr<MarginalBackend> backend, ChainState start,
                                 double initial_step)
    : data_(std::move(data)),
      priors_(std::move(priors)),
      current_(std::move(backend)),
      proposal_(priors_, initial_step),
      state_(std::move(start)) {
  if (!priors_.in_support(state_.theta))
    throw Error(ErrorKind::configuration, "starting values lie outside the prior support");
  candidate_ = current_->fresh();
  current_->prepare(state_.theta);
}

std::vector<std::string> MarginalSampler::parameter_names() const {
  return marginal_parameter_names(data_->n_covariates(), priors_.nu.has_value());
}

void MarginalSampler::step(Rng& rng, bool adapting) {
  const Eigen::Index p = state_.beta.size();

  // beta | theta, y ~ N(B^{-1} b, B^{-1})
  const Eigen::MatrixXd& g = current_->gram();
  Eigen::MatrixXd B = g.topLeftCorner(p, p) + priors_.beta.precision;
  Eigen::VectorXd b = g.col(p).head(p) + priors_.beta.precision * priors_.beta.mean;
  Eigen::LLT<Eigen::MatrixXd> llt(B);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::numerical, "beta full conditional precision is not positive definite");
  NormalSource normal(rng);
  Eigen::VectorXd z(p);
  for (Eigen::Index j = 0; j < p; ++j) z[j] = normal();
  state_.beta = llt.solve(b) + llt.matrixU().solve(z);

  // Joint MH block for (sigma2, tau2, phi[, nu]).
  const Proposal prop = proposal_.propose(state_.theta, rng);
  bool accept = false;
  if (priors_.in_support(prop.candidate)) {
    const double lp_cur =
        log_likelihood_from_gram(*current_, state_.beta) + priors_.log_density(state_.theta);
    candidate_->prepare(prop.candidate);
    const double lp_cand =
        log_likelihood_from_gram(*candidate_, state_.beta) + priors_.log_density(prop.candidate);
    accept = mh_accept(lp_cur, lp_cand, prop.log_jacobian_ratio, rng);
  }
  ++proposed_;
  if (accept) {
    ++accepted_;
    std::swap(current_, candidate_);
    state_.theta = prop.candidate;
  }
  if (adapting)
    proposal_.adapt(state_.theta, accept);
  else if (!proposal_.frozen())
    proposal_.freeze();
  ++state_.iteration;
}

void MarginalSampler::record(std::span<double> out) const {
  const auto p = static_cast<std::size_t>(state_.beta.size());
  for (std::size_t j = 0; j < p; ++j) out[j] = state_.beta[static_cast<Eigen::Index>(j)];
  out[p] = state_.theta.sigma2;
  out[p + 1] = state_.theta.tau2;
  out[p + 2] = state_.theta.phi;
  if (priors_.nu) out[p + 3] = state_.theta.nu;
}

double MarginalSampler::acceptance_rate() const {
  return proposed_ == 0 ? 0.0 : static_cast<double>(accepted_) / static_cast<double>(proposed_);
}

void MarginalSampler::reset_acceptance() {
  proposed_ = 0;
  accepted_ = 0;
}

Eigen::VectorXd MarginalFit::beta(std::size_t draw) const {
  const Eigen::VectorXd row = samples.draw(draw);
  return row.head(static_cast<Eigen::Index>(data->n_covariates()));
}

CovarianceParams MarginalFit::theta(std::size_t draw) const {
  const Eigen::VectorXd row = samples.draw(draw);
  const auto p = static_cast<Eigen::Index>(data->n_covariates());
  CovarianceParams t;
  t.sigma2 = row[p];
  t.tau2 = row[p + 1];
  t.phi = row[p + 2];
  t.nu = priors.nu ? row[p + 3] : priors.nu_fixed;
  return t;
}

std::vector<Forecast> PredictiveDraws::forecasts() const {
  std::vector<Forecast> out;
  out.reserve(n_sites());
  for (Eigen::Index i = 0; i < mean.rows(); ++i) {
    SampleForecast f;
    f.draws.resize(static_cast<std::size_t>(realization.cols()));
    for (Eigen::Index j = 0; j < realization.cols(); ++j)
      f.draws[static_cast<std::size_t>(j)] = realization(i, j);
    f.mean = mean.row(i).mean();
    out.emplace_back(std::move(f));
  }
  return out;
}

std::vector<PredictiveSummary> PredictiveDraws::summaries() const {
  std::vector<PredictiveSummary> out;
  out.reserve(n_sites());
  std::vector<double> row(static_cast<std::size_t>(realization.cols()));
  for (Eigen::Index i = 0; i < mean.rows(); ++i) {
    for (Eigen::Index j = 0; j < realization.cols(); ++j)
      row[static_cast<std::size_t>(j)] = realization(i, j);
    PredictiveSummary s = summarize_draws(row);
    // Rao-Blackwellized moments from the conditional means and sds.
    const double mu = mean.row(i).mean();
    const double within = sd.row(i).array().square().mean();
    const double between = (mean.row(i).array() - mu).square().mean();
    s.mean = mu;
    s.sd = std::sqrt(within + between);
    out.push_back(s);
  }
  return out;
}

}  // namespace nngp
