#include "nngp/response.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>

#include <Eigen/Cholesky>

#include "nngp/error.hpp"
#include "nngp/parallel.hpp"

namespace nngp {

ResponseBackend::ResponseBackend(std::shared_ptr<const OrderedData> data,
                                 std::shared_ptr<const NeighborGraph> graph, double jitter)
    : MarginalBackend(data->size()), data_(std::move(data)), jitter_(jitter), factor_(std::move(graph)) {
  const Eigen::Index n = data_->X.rows(), p = data_->X.cols();
  xy_.resize(n, p + 1);
  xy_.leftCols(p) = data_->X;
  xy_.col(p) = data_->y;
  gram_.resize(p + 1, p + 1);
}

void ResponseBackend::prepare(const CovarianceParams& theta) {
  const CovarianceModel model(theta);
  build_factor_into(CoordinateCovariance(data_->coords, model, true), factor_, jitter_);
  log_det_ = nngp::log_det(factor_);
  const Eigen::Index k = xy_.cols();
  const auto n = static_cast<std::size_t>(xy_.rows());
  for (Eigen::Index j = 0; j < k; ++j) {
    const std::span<const double> cj(xy_.col(j).data(), n);
    for (Eigen::Index i = 0; i <= j; ++i) {
      const double v = quadratic_form(std::span<const double>(xy_.col(i).data(), n), cj, factor_);
      gram_(i, j) = v;
      gram_(j, i) = v;
    }
  }
}

double ResponseBackend::quad(const Eigen::VectorXd& r) const {
  const std::span<const double> s(r.data(), static_cast<std::size_t>(r.size()));
  return quadratic_form(s, s, factor_);
}

std::unique_ptr<MarginalBackend> ResponseBackend::fresh() const {
  return std::make_unique<ResponseBackend>(data_, factor_.graph_ptr(), jitter_);
}

ResponseFit fit_response(const SpatialDataset& data, const PriorSpec& priors,
                         const NngpOptions& options, const McmcConfig& mcmc) {
  const auto t0 = std::chrono::steady_clock::now();
  priors.validate(data.n_covariates());
  const OrderedProblem problem = prepare_problem(data, options);
  const auto& ordered = problem.data;
  const auto& graph = problem.graph;
  ResponseFit fit;
  fit.data = ordered;
  fit.graph = graph;
  fit.priors = priors;
  fit.options = options;
  fit.mcmc = mcmc;
  const double jitter = options.jitter;
  const double step = options.initial_step;
  fit.samples = run_chains(
      [&](std::size_t, Rng& rng) -> std::unique_ptr<ChainKernel> {
        ChainState start = initial_state(*ordered, priors, rng);
        return std::make_unique<MarginalSampler>(
            ordered, priors, std::make_unique<ResponseBackend>(ordered, graph, jitter), start, step);
      },
      mcmc);
  fit.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return fit;
}

ResponseFit response_fit_from_samples(const SpatialDataset& data, const PriorSpec& priors,
                                      const NngpOptions& options, PosteriorSamples samples) {
  priors.validate(data.n_covariates());
  const auto expected = marginal_parameter_names(data.n_covariates(), priors.nu.has_value());
  if (samples.names != expected)
    throw Error(ErrorKind::configuration, "sample columns do not match the model parameters");
  const OrderedProblem problem = prepare_problem(data, options);
  ResponseFit fit;
  fit.data = problem.data;
  fit.graph = problem.graph;
  fit.priors = priors;
  fit.options = options;
  fit.samples = std::move(samples);
  return fit;
}

double response_log_likelihood(const SpatialDataset& data, const CovarianceParams& theta,
                               const Eigen::VectorXd& beta, const NngpOptions& options) {
  if (beta.size() != data.X.cols()) throw Error(ErrorKind::dimension, "beta has wrong length");
  theta.validate();
  auto [ordered, graph] = prepare_problem(data, options);
  ResponseBackend backend(ordered, graph, options.jitter);
  backend.prepare(theta);
  return log_likelihood(backend, ordered->y - ordered->X * beta);
}

PredictiveDraws predict_response(const ResponseFit& fit, std::span<const Point> sites,
                                 const Eigen::MatrixXd& X0, const PredictOptions& options) {
  const OrderedData& data = *fit.data;
  if (static_cast<std::size_t>(X0.rows()) != sites.size() || X0.cols() != data.X.cols())
    throw Error(ErrorKind::dimension, "prediction design does not match the sites or the fit");
  if (data.size() == 0) throw Error(ErrorKind::configuration, "empty reference set");
  if (options.stride < 1) throw Error(ErrorKind::configuration, "stride must be >= 1");
  const std::size_t m = options.m ? options.m : fit.options.m;
  const NeighborIndex index(data.coords);
  const std::size_t total = fit.n_draws();
  std::vector<std::size_t> used;
  for (std::size_t k = 0; k < total; k += options.stride) used.push_back(k);
  const auto nd = static_cast<Eigen::Index>(used.size());
  const auto ns = static_cast<Eigen::Index>(sites.size());

  std::vector<Eigen::VectorXd> betas(used.size());
  std::vector<CovarianceParams> thetas(used.size());
  for (std::size_t d = 0; d < used.size(); ++d) {
    betas[d] = fit.beta(used[d]);
    thetas[d] = fit.theta(used[d]);
  }

  PredictiveDraws out;
  out.mean.resize(ns, nd);
  out.sd.resize(ns, nd);
  out.realization.resize(ns, nd);

  std::atomic<bool> failed{false};
#pragma omp parallel for schedule(dynamic) num_threads(thread_budget())
  for (Eigen::Index s = 0; s < ns; ++s) {
    const Point s0 = sites[static_cast<std::size_t>(s)];
    const auto nb = index.query(s0, m);
    const auto k = static_cast<Eigen::Index>(nb.size());
    Eigen::MatrixXd dist(k, k);
    Eigen::VectorXd dist0(k), yn(k);
    Eigen::MatrixXd xn(k, data.X.cols());
    for (Eigen::Index a = 0; a < k; ++a) {
      const auto ia = nb[static_cast<std::size_t>(a)];
      dist0[a] = distance(s0, data.coords[ia]);
      yn[a] = data.y[static_cast<Eigen::Index>(ia)];
      xn.row(a) = data.X.row(static_cast<Eigen::Index>(ia));
      for (Eigen::Index b = 0; b <= a; ++b)
        dist(a, b) = distance(data.coords[ia], data.coords[nb[static_cast<std::size_t>(b)]]);
    }
    Rng rng = make_rng(options.seed, static_cast<std::uint64_t>(s));
    NormalSource normal(rng);
    Eigen::MatrixXd c0(k, k);
    Eigen::VectorXd c(k);
    for (Eigen::Index d = 0; d < nd; ++d) {
      const auto& th = thetas[static_cast<std::size_t>(d)];
      const Correlation corr(th.phi, th.nu);
      for (Eigen::Index a = 0; a < k; ++a) {
        c[a] = th.sigma2 * corr(dist0[a]);
        for (Eigen::Index b = 0; b < a; ++b) c0(a, b) = th.sigma2 * corr(dist(a, b));
        c0(a, a) = th.sigma2 + th.tau2;
      }
      Eigen::LLT<Eigen::MatrixXd> llt(c0);
      if (llt.info() != Eigen::Success) {
        failed = true;
        break;
      }
      const Eigen::VectorXd wts = llt.solve(c);
      const Eigen::VectorXd& beta = betas[static_cast<std::size_t>(d)];
      const double mu = X0.row(s).dot(beta) + wts.dot(yn - xn * beta);
      const double var = std::max(th.sigma2 + th.tau2 - wts.dot(c), 0.0);
      const double sd = std::sqrt(var);
      out.mean(s, d) = mu;
      out.sd(s, d) = sd;
      out.realization(s, d) = mu + sd * normal();
    }
  }
  if (failed)
    throw Error(ErrorKind::factorization, "prediction neighbor block is not positive definite");
  return out;
}

}  // namespace nngp
