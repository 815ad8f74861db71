#include "nngp/collapsed.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>

#include <Eigen/Cholesky>

#include "nngp/error.hpp"
#include "nngp/parallel.hpp"

namespace nngp {

CollapsedStructure::CollapsedStructure(std::shared_ptr<const NeighborGraph> graph,
                                       OrderingMethod method)
    : graph_(std::move(graph)), method_(method), assembler_(*graph_) {
  symbolic_ = SparseCholesky::analyze(assembler_.pattern(),
                                      fill_reducing_permutation(assembler_.pattern(), method));
}

CollapsedBackend::CollapsedBackend(std::shared_ptr<const OrderedData> data,
                                   std::shared_ptr<const CollapsedStructure> structure,
                                   double jitter)
    : MarginalBackend(data->size()),
      data_(std::move(data)),
      structure_(std::move(structure)),
      jitter_(jitter),
      factor_(structure_->graph()),
      omega_(structure_->assembler().pattern()),
      chol_(structure_->symbolic()) {
  const Eigen::Index n = data_->X.rows(), p = data_->X.cols();
  xy_.resize(n, p + 1);
  xy_.leftCols(p) = data_->X;
  xy_.col(p) = data_->y;
  xy_xy_ = xy_.transpose() * xy_;
  gram_.resize(p + 1, p + 1);
}

void CollapsedBackend::prepare(const CovarianceParams& theta) {
  if (!(theta.tau2 > 0.0))
    throw Error(ErrorKind::parameter_domain, "collapsed model needs tau2 > 0");
  CovarianceParams spatial = theta;
  spatial.tau2 = 0.0;
  const CovarianceModel model(spatial);
  build_factor_into(CoordinateCovariance(data_->coords, model, false), factor_, jitter_);
  log_det_c_ = nngp::log_det(factor_);
  tau2_ = theta.tau2;
  structure_->assembler().assemble(factor_, 1.0 / tau2_, omega_);
  chol_.factorize(omega_);
  const double n = static_cast<double>(size());
  log_det_ = n * std::log(tau2_) + log_det_c_ + chol_.log_det();

  // Lambda^{-1} = I/tau2 - P^T L^{-T} L^{-1} P / tau2^2, so the Gram matrix
  // only needs forward solves.
  const Eigen::Index k = xy_.cols();
  Eigen::MatrixXd u(xy_.rows(), k);
  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::VectorXd c = structure_->permutation().apply(xy_.col(j));
    chol_.solve_lower_in_place({c.data(), static_cast<std::size_t>(c.size())});
    u.col(j) = c;
  }
  gram_ = xy_xy_ / tau2_ - (u.transpose() * u) / (tau2_ * tau2_);
}

double CollapsedBackend::quad(const Eigen::VectorXd& r) const {
  Eigen::VectorXd u = structure_->permutation().apply(r);
  chol_.solve_lower_in_place({u.data(), static_cast<std::size_t>(u.size())});
  return r.squaredNorm() / tau2_ - u.squaredNorm() / (tau2_ * tau2_);
}

std::unique_ptr<MarginalBackend> CollapsedBackend::fresh() const {
  return std::make_unique<CollapsedBackend>(data_, structure_, jitter_);
}

Eigen::VectorXd CollapsedBackend::apply_inverse(const Eigen::VectorXd& v) const {
  return v / tau2_ - chol_.solve(v) / (tau2_ * tau2_);
}

Eigen::VectorXd CollapsedBackend::latent(const Eigen::VectorXd& residual,
                                         const Eigen::VectorXd& z) const {
  if (residual.size() != static_cast<Eigen::Index>(size()) || z.size() != residual.size())
    throw Error(ErrorKind::dimension, "latent draw: vector length mismatch");
  const Permutation& perm = structure_->permutation();
  Eigen::VectorXd u = perm.apply(residual);
  std::span<double> us(u.data(), static_cast<std::size_t>(u.size()));
  chol_.solve_lower_in_place(us);
  u = u / tau2_ + z;
  chol_.solve_upper_in_place(us);
  return perm.apply_transpose(u);
}

namespace {

CollapsedFit make_fit(const SpatialDataset& data, const PriorSpec& priors,
                      const NngpOptions& options, const McmcConfig& mcmc) {
  priors.validate(data.n_covariates());
  const OrderedProblem problem = prepare_problem(data, options);
  CollapsedFit fit;
  fit.data = problem.data;
  fit.graph = problem.graph;
  fit.structure = std::make_shared<const CollapsedStructure>(problem.graph, options.fill_ordering);
  fit.priors = priors;
  fit.options = options;
  fit.mcmc = mcmc;
  return fit;
}

Eigen::VectorXd to_original(const OrderedData& data, const Eigen::VectorXd& ordered) {
  Eigen::VectorXd out(ordered.size());
  for (std::size_t k = 0; k < data.order.size(); ++k)
    out[static_cast<Eigen::Index>(data.order[k])] = ordered[static_cast<Eigen::Index>(k)];
  return out;
}

void check_draw(const CollapsedFit& fit, std::size_t draw) {
  if (!fit.structure) throw Error(ErrorKind::state, "collapsed fit has no structure");
  if (draw >= fit.n_draws()) throw Error(ErrorKind::state, "retained draw index out of range");
}

}  // namespace

CollapsedFit fit_collapsed(const SpatialDataset& data, const PriorSpec& priors,
                           const NngpOptions& options, const McmcConfig& mcmc) {
  const auto t0 = std::chrono::steady_clock::now();
  CollapsedFit fit = make_fit(data, priors, options, mcmc);
  const auto ordered = fit.data;
  const auto structure = fit.structure;
  const double jitter = options.jitter;
  const double step = options.initial_step;
  fit.samples = run_chains(
      [&](std::size_t, Rng& rng) -> std::unique_ptr<ChainKernel> {
        ChainState start = initial_state(*ordered, priors, rng);
        return std::make_unique<MarginalSampler>(
            ordered, priors, std::make_unique<CollapsedBackend>(ordered, structure, jitter), start,
            step);
      },
      mcmc);
  fit.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return fit;
}

CollapsedFit collapsed_fit_from_samples(const SpatialDataset& data, const PriorSpec& priors,
                                        const NngpOptions& options, PosteriorSamples samples) {
  CollapsedFit fit = make_fit(data, priors, options, McmcConfig{});
  const auto expected = marginal_parameter_names(data.n_covariates(), priors.nu.has_value());
  if (samples.names != expected)
    throw Error(ErrorKind::configuration, "sample columns do not match the model parameters");
  fit.samples = std::move(samples);
  return fit;
}

double collapsed_log_likelihood(const SpatialDataset& data, const CovarianceParams& theta,
                                const Eigen::VectorXd& beta, const NngpOptions& options) {
  if (beta.size() != data.X.cols()) throw Error(ErrorKind::dimension, "beta has wrong length");
  theta.validate();
  const OrderedProblem problem = prepare_problem(data, options);
  auto structure = std::make_shared<const CollapsedStructure>(problem.graph, options.fill_ordering);
  CollapsedBackend backend(problem.data, structure, options.jitter);
  backend.prepare(theta);
  return log_likelihood(backend, problem.data->y - problem.data->X * beta);
}

Eigen::VectorXd recover_w(const CollapsedFit& fit, std::size_t draw, Rng& rng) {
  check_draw(fit, draw);
  CollapsedBackend backend(fit.data, fit.structure, fit.options.jitter);
  backend.prepare(fit.theta(draw));
  const Eigen::VectorXd r = fit.data->y - fit.data->X * fit.beta(draw);
  NormalSource normal(rng);
  Eigen::VectorXd z(r.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal();
  return to_original(*fit.data, backend.latent(r, z));
}

Eigen::VectorXd recover_w_mean(const CollapsedFit& fit, std::size_t draw) {
  check_draw(fit, draw);
  CollapsedBackend backend(fit.data, fit.structure, fit.options.jitter);
  backend.prepare(fit.theta(draw));
  const Eigen::VectorXd r = fit.data->y - fit.data->X * fit.beta(draw);
  return to_original(*fit.data, backend.latent(r, Eigen::VectorXd::Zero(r.size())));
}

PredictiveDraws predict_collapsed(const CollapsedFit& fit, std::span<const Point> sites,
                                  const Eigen::MatrixXd& X0, const PredictOptions& options) {
  const OrderedData& data = *fit.data;
  if (static_cast<std::size_t>(X0.rows()) != sites.size() || X0.cols() != data.X.cols())
    throw Error(ErrorKind::dimension, "prediction design does not match the sites or the fit");
  if (data.size() == 0) throw Error(ErrorKind::configuration, "empty reference set");
  if (options.stride < 1) throw Error(ErrorKind::configuration, "stride must be >= 1");
  if (!fit.structure) throw Error(ErrorKind::state, "collapsed fit has no structure");
  const std::size_t m = options.m ? options.m : fit.options.m;
  const NeighborIndex index(data.coords);
  const std::size_t ns = sites.size();

  // Neighbor sets and distances do not depend on the draw.
  struct Site {
    std::vector<std::size_t> nb;
    Eigen::MatrixXd dist;
    Eigen::VectorXd dist0;
  };
  std::vector<Site> prep(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    Site& st = prep[s];
    st.nb = index.query(sites[s], m);
    const auto k = static_cast<Eigen::Index>(st.nb.size());
    st.dist.resize(k, k);
    st.dist0.resize(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      const Point& pa = data.coords[st.nb[static_cast<std::size_t>(a)]];
      st.dist0[a] = distance(sites[s], pa);
      for (Eigen::Index b = 0; b <= a; ++b)
        st.dist(a, b) = distance(pa, data.coords[st.nb[static_cast<std::size_t>(b)]]);
    }
  }

  std::vector<std::size_t> used;
  for (std::size_t k = 0; k < fit.n_draws(); k += options.stride) used.push_back(k);
  const auto nd = static_cast<Eigen::Index>(used.size());
  PredictiveDraws out;
  out.mean.resize(static_cast<Eigen::Index>(ns), nd);
  out.sd.resize(static_cast<Eigen::Index>(ns), nd);
  out.realization.resize(static_cast<Eigen::Index>(ns), nd);

  std::atomic<bool> failed{false};
  std::exception_ptr error;
#pragma omp parallel num_threads(thread_budget())
  {
    CollapsedBackend backend(fit.data, fit.structure, fit.options.jitter);
    Eigen::MatrixXd c0;
    Eigen::VectorXd c;
#pragma omp for schedule(dynamic)
    for (Eigen::Index d = 0; d < nd; ++d) {
      if (failed) continue;
      try {
        const std::size_t draw = used[static_cast<std::size_t>(d)];
        const CovarianceParams th = fit.theta(draw);
        const Eigen::VectorXd beta = fit.beta(draw);
        Rng rng = make_rng(options.seed, draw);
        NormalSource normal(rng);
        backend.prepare(th);
        const Eigen::VectorXd r = data.y - data.X * beta;
        Eigen::VectorXd z(r.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal();
        const Eigen::VectorXd w = backend.latent(r, z);
        const Correlation corr(th.phi, th.nu);
        for (std::size_t s = 0; s < ns; ++s) {
          const Site& st = prep[s];
          const auto k = static_cast<Eigen::Index>(st.nb.size());
          c0.resize(k, k);
          c.resize(k);
          Eigen::VectorXd wn(k);
          for (Eigen::Index a = 0; a < k; ++a) {
            c[a] = th.sigma2 * corr(st.dist0[a]);
            wn[a] = w[static_cast<Eigen::Index>(st.nb[static_cast<std::size_t>(a)])];
            for (Eigen::Index b = 0; b < a; ++b) c0(a, b) = th.sigma2 * corr(st.dist(a, b));
            c0(a, a) = th.sigma2 + fit.options.jitter;
          }
          Eigen::LLT<Eigen::MatrixXd> llt(c0);
          if (llt.info() != Eigen::Success)
            throw FactorizationError(s, "prediction neighbor block is not positive definite");
          const Eigen::VectorXd wts = llt.solve(c);
          const auto si = static_cast<Eigen::Index>(s);
          const double mu = X0.row(si).dot(beta) + wts.dot(wn);
          const double var_w = std::max(th.sigma2 - wts.dot(c), 0.0);
          const double sd = std::sqrt(var_w + th.tau2);
          out.mean(si, d) = mu;
          out.sd(si, d) = sd;
          out.realization(si, d) = mu + sd * normal();
        }
      } catch (...) {
#pragma omp critical(nngp_predict_error)
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace nngp
