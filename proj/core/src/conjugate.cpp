#include "nngp/conjugate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>

#include <Eigen/Cholesky>

#include "nngp/error.hpp"
#include "nngp/nn_factor.hpp"
#include "nngp/parallel.hpp"

namespace nngp {

ConjugatePrior ConjugatePrior::vague(std::size_t p, double variance, double a_sigma, double b_sigma) {
  ConjugatePrior pr;
  const auto ip = static_cast<Eigen::Index>(p);
  pr.a_sigma = a_sigma;
  pr.b_sigma = b_sigma;
  pr.mu_beta = Eigen::VectorXd::Zero(ip);
  pr.v_beta = variance * Eigen::MatrixXd::Identity(ip, ip);
  return pr;
}

void ConjugatePrior::validate(std::size_t p) const {
  if (!(a_sigma > 0.0) || !(b_sigma > 0.0) || !std::isfinite(a_sigma) || !std::isfinite(b_sigma))
    throw Error(ErrorKind::configuration, "conjugate sigma2 prior needs positive finite a and b");
  const auto ip = static_cast<Eigen::Index>(p);
  if (mu_beta.size() != ip || v_beta.rows() != ip || v_beta.cols() != ip)
    throw Error(ErrorKind::dimension, "conjugate beta prior does not match the covariates");
  if (!mu_beta.allFinite() || !v_beta.allFinite())
    throw Error(ErrorKind::configuration, "conjugate beta prior must be proper and finite");
  Eigen::LLT<Eigen::MatrixXd> llt(v_beta);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::configuration, "conjugate beta prior covariance is not positive definite");
}

double ConjugatePosterior::sigma2_mean() const {
  if (!(a_star > 1.0)) throw Error(ErrorKind::numerical, "posterior mean of sigma2 needs a* > 1");
  return b_star / (a_star - 1.0);
}

namespace {

struct Prior {
  Eigen::MatrixXd v_inv;
  Eigen::VectorXd v_inv_mu;
  double mu_v_mu = 0.0;
};

Prior prepare_prior(const ConjugatePrior& prior) {
  Prior out;
  const Eigen::LLT<Eigen::MatrixXd> llt(prior.v_beta);
  out.v_inv = llt.solve(Eigen::MatrixXd::Identity(prior.v_beta.rows(), prior.v_beta.cols()));
  out.v_inv = 0.5 * (out.v_inv + out.v_inv.transpose()).eval();
  out.v_inv_mu = out.v_inv * prior.mu_beta;
  out.mu_v_mu = prior.mu_beta.dot(out.v_inv_mu);
  return out;
}

void check_fixed(double phi, double alpha, double nu) {
  if (!(phi > 0.0) || !(alpha >= 0.0) || !(nu > 0.0) || !std::isfinite(phi) ||
      !std::isfinite(alpha) || !std::isfinite(nu))
    throw Error(ErrorKind::parameter_domain, "conjugate model needs phi > 0, alpha >= 0, nu > 0");
}

ConjugatePosterior posterior_from(const OrderedData& data,
                                  const std::shared_ptr<const NeighborGraph>& graph,
                                  const ConjugatePrior& prior, const Prior& pre, double phi,
                                  double alpha, double nu, double jitter) {
  const CovarianceModel model(CovarianceParams{1.0, phi, nu, alpha});
  const NNFactor factor =
      build_factor(CoordinateCovariance(data.coords, model, true), graph, jitter);
  const Eigen::Index p = data.X.cols();
  const auto n = static_cast<std::size_t>(data.X.rows());
  Eigen::MatrixXd g(p + 1, p + 1);
  auto col = [&](Eigen::Index j) {
    return std::span<const double>(j < p ? data.X.col(j).data() : data.y.data(), n);
  };
  for (Eigen::Index j = 0; j <= p; ++j)
    for (Eigen::Index i = 0; i <= j; ++i) g(i, j) = g(j, i) = quadratic_form(col(i), col(j), factor);

  const Eigen::MatrixXd B = pre.v_inv + g.topLeftCorner(p, p);
  const Eigen::VectorXd b = pre.v_inv_mu + g.col(p).head(p);
  const Eigen::LLT<Eigen::MatrixXd> llt(B);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::numerical, "conjugate B is not positive definite (collinear design?)");
  ConjugatePosterior post;
  post.beta_mean = llt.solve(b);
  post.beta_cov_scale = llt.solve(Eigen::MatrixXd::Identity(p, p));
  post.a_star = prior.a_sigma + 0.5 * static_cast<double>(n);
  post.b_star = prior.b_sigma + 0.5 * (pre.mu_v_mu + g(p, p) - b.dot(post.beta_mean));
  if (!(post.b_star > 0.0)) throw Error(ErrorKind::numerical, "conjugate b* is not positive");
  post.phi = phi;
  post.alpha = alpha;
  post.nu = nu;
  return post;
}

// Distances needed to predict one site from fixed neighbors.
struct SiteGeometry {
  std::vector<std::size_t> nb;
  Eigen::MatrixXd dist;  // lower triangle
  Eigen::VectorXd dist0;
};

SiteGeometry site_geometry(const std::vector<Point>& coords, const Point& s0,
                           std::vector<std::size_t> nb) {
  SiteGeometry g;
  g.nb = std::move(nb);
  const auto k = static_cast<Eigen::Index>(g.nb.size());
  g.dist.resize(k, k);
  g.dist0.resize(k);
  for (Eigen::Index a = 0; a < k; ++a) {
    const Point& pa = coords[g.nb[static_cast<std::size_t>(a)]];
    g.dist0[a] = distance(s0, pa);
    for (Eigen::Index b = 0; b <= a; ++b) g.dist(a, b) = distance(pa, coords[g.nb[static_cast<std::size_t>(b)]]);
  }
  return g;
}

ConjugatePrediction predict_site(const ConjugatePosterior& post, const OrderedData& data,
                                 const SiteGeometry& geo, const Eigen::VectorXd& x0) {
  const Correlation corr(post.phi, post.nu);
  const auto k = static_cast<Eigen::Index>(geo.nb.size());
  Eigen::MatrixXd mnn(k, k);
  Eigen::VectorXd z(k), yn(k);
  Eigen::MatrixXd xn(k, data.X.cols());
  for (Eigen::Index a = 0; a < k; ++a) {
    const auto ia = static_cast<Eigen::Index>(geo.nb[static_cast<std::size_t>(a)]);
    z[a] = corr(geo.dist0[a]);
    yn[a] = data.y[ia];
    xn.row(a) = data.X.row(ia);
    for (Eigen::Index b = 0; b < a; ++b) mnn(a, b) = corr(geo.dist(a, b));
    mnn(a, a) = 1.0 + post.alpha;
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(mnn);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::factorization, "prediction neighbor block is not positive definite");
  const Eigen::VectorXd w = llt.solve(z);
  const Eigen::VectorXd u = x0 - xn.transpose() * w;
  ConjugatePrediction pr;
  pr.mean = x0.dot(post.beta_mean) + w.dot(yn - xn * post.beta_mean);
  pr.v0 = u.dot(post.beta_cov_scale * u) + 1.0 + post.alpha - w.dot(z);
  if (!(pr.v0 > 0.0)) throw Error(ErrorKind::numerical, "predictive v0 is not positive");
  pr.dof = 2.0 * post.a_star;
  pr.scale = std::sqrt(post.b_star * pr.v0 / post.a_star);
  return pr;
}

}  // namespace

ConjugateFit fit_conjugate(const SpatialDataset& data, const ConjugatePrior& prior, double phi,
                           double alpha, double nu, const NngpOptions& options) {
  check_fixed(phi, alpha, nu);
  prior.validate(data.n_covariates());
  const OrderedProblem problem = prepare_problem(data, options);
  ConjugateFit fit;
  fit.prior = prior;
  fit.data = problem.data;
  fit.graph = problem.graph;
  fit.index = std::make_shared<const NeighborIndex>(problem.data->coords);
  fit.m = options.m;
  fit.posterior = posterior_from(*problem.data, problem.graph, prior, prepare_prior(prior), phi,
                                 alpha, nu, options.jitter);
  return fit;
}

ConjugatePrediction predict_conjugate(const ConjugateFit& fit, const Point& s0,
                                      const Eigen::VectorXd& x0, std::size_t m) {
  if (x0.size() != fit.data->X.cols())
    throw Error(ErrorKind::dimension, "prediction covariates do not match the fit");
  if (fit.data->size() == 0) throw Error(ErrorKind::configuration, "empty reference set");
  const auto geo = site_geometry(fit.data->coords, s0, fit.index->query(s0, m ? m : fit.m));
  return predict_site(fit.posterior, *fit.data, geo, x0);
}

std::vector<ConjugatePrediction> predict_conjugate(const ConjugateFit& fit,
                                                   std::span<const Point> sites,
                                                   const Eigen::MatrixXd& X0, std::size_t m) {
  if (static_cast<std::size_t>(X0.rows()) != sites.size())
    throw Error(ErrorKind::dimension, "prediction design does not match the sites");
  std::vector<ConjugatePrediction> out(sites.size());
  for (std::size_t s = 0; s < sites.size(); ++s)
    out[s] = predict_conjugate(fit, sites[s], X0.row(static_cast<Eigen::Index>(s)).transpose(), m);
  return out;
}

void CVGridSpec::validate() const {
  if (phi.empty() || alpha.empty()) throw Error(ErrorKind::configuration, "CV grid is empty");
  for (double v : phi)
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorKind::configuration, "CV phi values must be positive");
  for (double v : alpha)
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorKind::configuration, "CV alpha values must be non-negative");
  if (folds < 2) throw Error(ErrorKind::configuration, "CV needs at least two folds");
  if (!(nu > 0.0)) throw Error(ErrorKind::configuration, "CV nu must be positive");
}

std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi >= lo) || count == 0)
    throw Error(ErrorKind::configuration, "log-spaced grid needs 0 < lo <= hi and count >= 1");
  std::vector<double> v(count);
  if (count == 1) {
    v[0] = std::sqrt(lo * hi);
    return v;
  }
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i)
    v[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  v.front() = lo;
  v.back() = hi;
  return v;
}

CVGridSpec default_cv_grid(const Uniform& phi_support, std::size_t n_phi, std::size_t n_alpha,
                           double alpha_lo, double alpha_hi) {
  CVGridSpec g;
  g.phi = log_spaced(phi_support.lower, phi_support.upper, n_phi);
  g.alpha = log_spaced(alpha_lo, alpha_hi, n_alpha);
  return g;
}

CVGrid cross_validate(const SpatialDataset& data, const CVGridSpec& grid,
                      const ConjugatePrior& prior, const NngpOptions& options) {
  grid.validate();
  options.validate();
  data.validate();
  prior.validate(data.n_covariates());
  const std::size_t n = data.size();
  const std::size_t K = grid.folds;
  if (n < K * (options.m + 1))
    throw Error(ErrorKind::configuration, "folds too small: need n >= K (m + 1)");

  CVGrid out;
  out.phi = grid.phi;
  out.alpha = grid.alpha;
  out.folds = K;
  out.fold_of.assign(n, 0);
  {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = make_rng(grid.seed, 0xF01D);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng() % (i + 1)]);
    for (std::size_t k = 0; k < n; ++k) out.fold_of[idx[k]] = k % K;
  }

  // Per fold: training problem, its neighbor graph and the holdout geometry.
  struct Fold {
    OrderedProblem train;
    std::vector<SiteGeometry> sites;
    Eigen::MatrixXd x0;
    Eigen::VectorXd y0;
  };
  std::vector<Fold> folds(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<std::size_t> tr, ho;
    for (std::size_t i = 0; i < n; ++i) (out.fold_of[i] == k ? ho : tr).push_back(i);
    Fold& f = folds[k];
    const SpatialDataset train = data.subset(tr);
    check_design(train.X);
    f.train = prepare_problem(train, options);
    const NeighborIndex index(f.train.data->coords);
    f.x0.resize(static_cast<Eigen::Index>(ho.size()), data.X.cols());
    f.y0.resize(static_cast<Eigen::Index>(ho.size()));
    for (std::size_t s = 0; s < ho.size(); ++s) {
      const Point& s0 = data.coords[ho[s]];
      f.sites.push_back(site_geometry(f.train.data->coords, s0, index.query(s0, options.m)));
      f.x0.row(static_cast<Eigen::Index>(s)) = data.X.row(static_cast<Eigen::Index>(ho[s]));
      f.y0[static_cast<Eigen::Index>(s)] = data.y[static_cast<Eigen::Index>(ho[s])];
    }
  }

  const Prior pre = prepare_prior(prior);
  const std::size_t np = grid.phi.size(), na = grid.alpha.size();
  const std::size_t tasks = np * na * K;
  std::vector<double> sse(tasks, 0.0), crps_sum(tasks, 0.0);
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  const auto st = static_cast<std::ptrdiff_t>(tasks);
#pragma omp parallel for schedule(dynamic) num_threads(thread_budget())
  for (std::ptrdiff_t t = 0; t < st; ++t) {
    if (failed) continue;
    const auto task = static_cast<std::size_t>(t);
    const std::size_t k = task % K;
    const std::size_t a = (task / K) % na;
    const std::size_t ph = task / (K * na);
    try {
      ThreadBudgetScope serial(1);
      const Fold& f = folds[k];
      const ConjugatePosterior post = posterior_from(*f.train.data, f.train.graph, prior, pre,
                                                     grid.phi[ph], grid.alpha[a], grid.nu,
                                                     options.jitter);
      double e2 = 0.0, cr = 0.0;
      for (std::size_t s = 0; s < f.sites.size(); ++s) {
        const auto si = static_cast<Eigen::Index>(s);
        const ConjugatePrediction pr =
            predict_site(post, *f.train.data, f.sites[s], f.x0.row(si).transpose());
        const double e = f.y0[si] - pr.mean;
        e2 += e * e;
        cr += crps_student_t(pr.mean, pr.scale, pr.dof, f.y0[si]);
      }
      sse[task] = e2;
      crps_sum[task] = cr;
    } catch (...) {
#pragma omp critical(nngp_cv_error)
      if (!error) error = std::current_exception();
      failed = true;
    }
  }
  if (error) std::rethrow_exception(error);

  out.rmspe.resize(static_cast<Eigen::Index>(np), static_cast<Eigen::Index>(na));
  out.crps.resize(static_cast<Eigen::Index>(np), static_cast<Eigen::Index>(na));
  const double dn = static_cast<double>(n);
  for (std::size_t ph = 0; ph < np; ++ph)
    for (std::size_t a = 0; a < na; ++a) {
      double e2 = 0.0, cr = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        e2 += sse[(ph * na + a) * K + k];
        cr += crps_sum[(ph * na + a) * K + k];
      }
      out.rmspe(static_cast<Eigen::Index>(ph), static_cast<Eigen::Index>(a)) = std::sqrt(e2 / dn);
      out.crps(static_cast<Eigen::Index>(ph), static_cast<Eigen::Index>(a)) = cr / dn;
    }
  Eigen::Index r = 0, c = 0;
  out.rmspe.minCoeff(&r, &c);
  out.argmin_rmspe = {static_cast<std::size_t>(r), static_cast<std::size_t>(c)};
  out.crps.minCoeff(&r, &c);
  out.argmin_crps = {static_cast<std::size_t>(r), static_cast<std::size_t>(c)};
  return out;
}

}  // namespace nngp
