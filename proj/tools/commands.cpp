#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <boost/math/distributions/students_t.hpp>

#include "nngp/collapsed.hpp"
#include "nngp/error.hpp"
#include "nngp/parallel.hpp"
#include "nngp/response.hpp"

namespace cli {

using nngp::Error;
using nngp::ErrorKind;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

nngp::RunReport base_report(const std::string& command, const Common& c) {
  nngp::RunReport r;
  r.command = command;
  r.config = c.echo;
  r.seeds = {c.seed};
  return r;
}

void maybe_write_report(const Common& c, const nngp::RunReport& r) {
  if (!c.report.empty()) nngp::write_report(c.report, r);
}

std::vector<double> sorted(const Eigen::VectorXd& v) {
  std::vector<double> s(v.data(), v.data() + v.size());
  std::sort(s.begin(), s.end());
  return s;
}

const char* model_name(Model m) {
  switch (m) {
    case Model::response: return "response";
    case Model::collapsed: return "collapsed";
    case Model::conjugate: return "conjugate";
  }
  return "?";
}

// Posterior table shared by fit output and report.
nngp::ReportSection parameter_section(const nngp::PosteriorSamples& s) {
  nngp::ReportSection sec{"parameters", {}, {}};
  const bool psrf = s.n_chains() >= 2 && s.retained_per_chain() >= 10;
  std::printf("%-10s %12s %12s %12s %12s%s\n", "parameter", "mean", "median", "q025", "q975",
              psrf ? "         psrf" : "");
  for (std::size_t c = 0; c < s.names.size(); ++c) {
    const Eigen::VectorXd x = s.pooled(c);
    const auto v = sorted(x);
    const double mean = x.mean();
    const double med = nngp::quantile_type7(v, 0.5);
    const double lo = nngp::quantile_type7(v, 0.025);
    const double hi = nngp::quantile_type7(v, 0.975);
    const auto& name = s.names[c];
    sec.numbers.insert(sec.numbers.end(),
                       {{name + ".mean", mean}, {name + ".median", med}, {name + ".q025", lo}, {name + ".q975", hi}});
    std::printf("%-10s %12.5g %12.5g %12.5g %12.5g", name.c_str(), mean, med, lo, hi);
    if (psrf) {
      const double r = nngp::gelman_rubin(s.per_chain(c));
      sec.numbers.emplace_back(name + ".psrf", r);
      std::printf(" %12.4f", r);
    }
    std::printf("\n");
  }
  return sec;
}

nngp::PredictionRecord t_record(const nngp::Point& site, const nngp::ConjugatePrediction& p) {
  const boost::math::students_t dist(p.dof);
  const double q = boost::math::quantile(dist, 0.975);
  nngp::PredictionRecord r;
  r.site = site;
  r.summary = {p.mean, std::sqrt(p.variance()), p.mean, p.mean - q * p.scale, p.mean + q * p.scale};
  r.t = p.forecast();
  return r;
}

void print_score(const nngp::ScoreReport& s) {
  std::printf("n=%zu crps=%.6g rmspe=%.6g pic_95=%.4g piw_95=%.6g\n", s.n_holdout, s.crps, s.rmspe, s.pic_95,
              s.piw_95);
}

}  // namespace

nngp::DatasetSchema DataOptions::schema() const {
  nngp::DatasetSchema s;
  s.covariates = covariates;
  s.add_intercept = !no_intercept;
  s.average_duplicates = average_duplicates;
  return s;
}

nngp::NngpOptions ModelOptions::nngp() const {
  nngp::NngpOptions o;
  o.m = m;
  if (ordering == "coord_sum") o.ordering = nngp::OrderingStrategy::coord_sum;
  else if (ordering == "first_coord") o.ordering = nngp::OrderingStrategy::first_coord;
  else throw Error(ErrorKind::configuration, "unknown ordering '" + ordering + "'");
  if (fill_ordering == "amd") o.fill_ordering = nngp::OrderingMethod::approximate_minimum_degree;
  else if (fill_ordering == "rcm") o.fill_ordering = nngp::OrderingMethod::reverse_cuthill_mckee;
  else if (fill_ordering == "natural") o.fill_ordering = nngp::OrderingMethod::natural;
  else throw Error(ErrorKind::configuration, "unknown fill ordering '" + fill_ordering + "'");
  o.jitter = jitter;
  o.validate();
  return o;
}

nngp::PriorSpec ModelOptions::priors(std::size_t p) const {
  auto pair = [](const std::vector<double>& v, const char* what) {
    if (v.size() != 2) throw Error(ErrorKind::configuration, std::string(what) + " needs two values");
    return std::make_pair(v[0], v[1]);
  };
  nngp::PriorSpec pr;
  if (!beta_mean.empty() || !beta_var.empty()) {
    if (beta_mean.size() != p || beta_var.size() != p)
      throw Error(ErrorKind::configuration, "beta prior mean and variance need one value per covariate");
    Eigen::VectorXd mu = Eigen::Map<const Eigen::VectorXd>(beta_mean.data(), static_cast<Eigen::Index>(p));
    Eigen::VectorXd var = Eigen::Map<const Eigen::VectorXd>(beta_var.data(), static_cast<Eigen::Index>(p));
    pr.beta = nngp::BetaPrior::make_normal(mu, var.asDiagonal().toDenseMatrix());
  } else {
    pr.beta = nngp::BetaPrior::make_flat(p);
  }
  std::tie(pr.sigma2.shape, pr.sigma2.rate) = pair(sigma2_prior, "sigma2-prior");
  std::tie(pr.tau2.shape, pr.tau2.rate) = pair(tau2_prior, "tau2-prior");
  std::tie(pr.phi.lower, pr.phi.upper) = pair(phi_prior, "phi-prior");
  pr.nu_fixed = nu;
  if (!nu_prior.empty()) {
    const auto [lo, hi] = pair(nu_prior, "nu-prior");
    pr.nu = nngp::Uniform{lo, hi};
  }
  pr.validate(p);
  return pr;
}

nngp::ConjugatePrior ModelOptions::conjugate_prior(std::size_t p) const {
  if (sigma2_prior.size() != 2) throw Error(ErrorKind::configuration, "sigma2-prior needs two values");
  nngp::ConjugatePrior pr;
  if (beta_mean.empty() && beta_var.empty()) {
    std::fprintf(stderr, "warning: flat beta prior replaced by N(0, %g I) for the conjugate model\n",
                 vague_variance);
    pr = nngp::ConjugatePrior::vague(p, vague_variance, sigma2_prior[0], sigma2_prior[1]);
  } else {
    if (beta_mean.size() != p || beta_var.size() != p)
      throw Error(ErrorKind::configuration, "beta prior mean and variance need one value per covariate");
    pr.a_sigma = sigma2_prior[0];
    pr.b_sigma = sigma2_prior[1];
    pr.mu_beta = Eigen::Map<const Eigen::VectorXd>(beta_mean.data(), static_cast<Eigen::Index>(p));
    pr.v_beta = Eigen::Map<const Eigen::VectorXd>(beta_var.data(), static_cast<Eigen::Index>(p)).asDiagonal();
  }
  pr.validate(p);
  return pr;
}

nngp::McmcConfig McmcOptions::config(const Common& common) const {
  nngp::McmcConfig c;
  c.n_chains = chains;
  c.n_iter = iterations;
  c.burn_in = burn_in;
  c.thin = thin;
  c.seed = common.seed;
  c.threads = common.threads;
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Common& c, const SimulateArgs& a) {
  if (a.out.empty()) throw Error(ErrorKind::configuration, "simulate needs --out");
  nngp::SimulationSpec spec;
  spec.n = a.n;
  spec.beta = Eigen::Map<const Eigen::VectorXd>(a.beta.data(), static_cast<Eigen::Index>(a.beta.size()));
  spec.params = {a.sigma2, a.phi, a.nu, a.tau2};
  spec.seed = c.seed;
  spec.dense_cap = a.dense_cap;
  spec.sim_m = a.sim_m;
  const auto t0 = Clock::now();
  const nngp::SpatialDataset d = nngp::simulate(spec);
  nngp::RunReport rep = base_report("simulate", c);
  if (a.holdout > 0) {
    if (a.holdout_out.empty()) throw Error(ErrorKind::configuration, "--holdout needs --holdout-out");
    const nngp::DataSplit s = nngp::split(d, a.holdout, c.seed);
    nngp::write_dataset(a.out, s.train);
    nngp::write_dataset(a.holdout_out, s.holdout);
    std::printf("wrote %zu training rows to %s and %zu holdout rows to %s\n", s.train.size(), a.out.c_str(),
                s.holdout.size(), a.holdout_out.c_str());
  } else {
    nngp::write_dataset(a.out, d);
    std::printf("wrote %zu rows to %s\n", d.size(), a.out.c_str());
  }
  rep.timings = {{"simulate_seconds", seconds_since(t0)}};
  maybe_write_report(c, rep);
  return 0;
}

int cmd_fit(const Common& c, const FitArgs& a) {
  const nngp::SpatialDataset d = nngp::read_dataset(a.data.path, a.data.schema());
  const std::size_t p = d.n_covariates();
  const nngp::NngpOptions opt = a.model.nngp();
  nngp::RunReport rep = base_report("fit", c);
  const auto t0 = Clock::now();

  if (a.model.model == Model::conjugate) {
    if (!(a.model.phi > 0.0) || !(a.model.alpha > 0.0))
      throw Error(ErrorKind::configuration, "conjugate fit needs --phi and --alpha (see the cv command)");
    nngp::ThreadBudgetScope budget(c.threads);
    const nngp::ConjugateFit fit =
        nngp::fit_conjugate(d, a.model.conjugate_prior(p), a.model.phi, a.model.alpha, a.model.nu, opt);
    const auto& post = fit.posterior;
    nngp::ReportSection sec{"posterior", {}, {}};
    sec.numbers = {{"a_star", post.a_star}, {"b_star", post.b_star}, {"sigma2.mean", post.sigma2_mean()}};
    const boost::math::students_t dist(2.0 * post.a_star);
    const double q = boost::math::quantile(dist, 0.975);
    const Eigen::MatrixXd scale = post.beta_t_scale();
    std::printf("%-10s %12s %12s %12s\n", "parameter", "mean", "q025", "q975");
    for (std::size_t j = 0; j < p; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double half = q * std::sqrt(scale(jj, jj));
      const std::string name = "beta" + std::to_string(j);
      sec.numbers.insert(sec.numbers.end(), {{name + ".mean", post.beta_mean[jj]},
                                             {name + ".q025", post.beta_mean[jj] - half},
                                             {name + ".q975", post.beta_mean[jj] + half}});
      std::printf("%-10s %12.5g %12.5g %12.5g\n", name.c_str(), post.beta_mean[jj], post.beta_mean[jj] - half,
                  post.beta_mean[jj] + half);
    }
    std::printf("%-10s %12.5g\n", "sigma2", post.sigma2_mean());
    rep.sections.push_back(sec);
  } else {
    const nngp::PriorSpec pr = a.model.priors(p);
    const nngp::McmcConfig mc = a.mcmc.config(c);
    const nngp::PosteriorSamples samples = a.model.model == Model::response
                                               ? nngp::fit_response(d, pr, opt, mc).samples
                                               : nngp::fit_collapsed(d, pr, opt, mc).samples;
    if (!a.samples.empty()) nngp::write_samples(a.samples, samples);
    rep.seeds = samples.seeds;
    rep.sections.push_back(parameter_section(samples));
    nngp::ReportSection acc{"acceptance", {}, {}};
    for (std::size_t k = 0; k < samples.acceptance.size(); ++k)
      acc.numbers.emplace_back("chain" + std::to_string(k), samples.acceptance[k]);
    rep.sections.push_back(acc);
  }
  rep.timings = {{"fit_seconds", seconds_since(t0)}};
  maybe_write_report(c, rep);
  return 0;
}

int cmd_cv(const Common& c, const CvArgs& a) {
  const nngp::SpatialDataset d = nngp::read_dataset(a.data.path, a.data.schema());
  if (a.model.phi_prior.size() != 2 || a.alpha_range.size() != 2)
    throw Error(ErrorKind::configuration, "phi-prior and alpha-range need two values");
  nngp::CVGridSpec grid = nngp::default_cv_grid({a.model.phi_prior[0], a.model.phi_prior[1]}, a.n_phi, a.n_alpha,
                                                a.alpha_range[0], a.alpha_range[1]);
  grid.folds = a.folds;
  grid.seed = c.seed;
  grid.nu = a.model.nu;
  const auto t0 = Clock::now();
  nngp::ThreadBudgetScope budget(c.threads);
  const nngp::CVGrid cv = nngp::cross_validate(d, grid, a.model.conjugate_prior(d.n_covariates()), a.model.nngp());

  if (!a.grid_out.empty()) {
    std::ofstream out(a.grid_out);
    if (!out) throw Error(ErrorKind::io, "cannot write " + a.grid_out);
    out << "phi,alpha,rmspe,crps\n";
    char buf[128];
    for (std::size_t i = 0; i < cv.phi.size(); ++i)
      for (std::size_t j = 0; j < cv.alpha.size(); ++j) {
        const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", cv.phi[i], cv.alpha[j], cv.rmspe(ii, jj),
                      cv.crps(ii, jj));
        out << buf;
      }
  }
  const auto [ri, rj] = cv.argmin_rmspe;
  const auto [ci, cj] = cv.argmin_crps;
  std::printf("rmspe argmin: phi=%.6g alpha=%.6g rmspe=%.6g\n", cv.phi[ri], cv.alpha[rj],
              cv.rmspe(static_cast<Eigen::Index>(ri), static_cast<Eigen::Index>(rj)));
  std::printf("crps argmin:  phi=%.6g alpha=%.6g crps=%.6g\n", cv.phi[ci], cv.alpha[cj],
              cv.crps(static_cast<Eigen::Index>(ci), static_cast<Eigen::Index>(cj)));
  nngp::RunReport rep = base_report("cv", c);
  rep.sections.push_back({"choice",
                          {},
                          {{"rmspe.phi", cv.phi[ri]},
                           {"rmspe.alpha", cv.alpha[rj]},
                           {"rmspe.value", cv.rmspe.minCoeff()},
                           {"crps.phi", cv.phi[ci]},
                           {"crps.alpha", cv.alpha[cj]},
                           {"crps.value", cv.crps.minCoeff()}}});
  rep.timings = {{"cv_seconds", seconds_since(t0)}};
  maybe_write_report(c, rep);
  return 0;
}

int cmd_predict(const Common& c, const PredictArgs& a) {
  if (a.sites.empty() || a.out.empty()) throw Error(ErrorKind::configuration, "predict needs --sites and --out");
  const nngp::SpatialDataset d = nngp::read_dataset(a.data.path, a.data.schema());
  const nngp::PredictionSites sites = nngp::read_sites(a.sites, a.data.schema());
  if (sites.X.cols() != d.X.cols())
    throw Error(ErrorKind::dimension, a.sites + ": covariate columns do not match the training data");
  const std::size_t p = d.n_covariates();
  const nngp::NngpOptions opt = a.model.nngp();
  const auto t0 = Clock::now();

  std::vector<nngp::PredictionRecord> records;
  std::vector<nngp::Forecast> forecasts;
  if (a.model.model == Model::conjugate) {
    if (!(a.model.phi > 0.0) || !(a.model.alpha > 0.0))
      throw Error(ErrorKind::configuration, "conjugate prediction needs --phi and --alpha");
    nngp::ThreadBudgetScope budget(c.threads);
    const nngp::ConjugateFit fit =
        nngp::fit_conjugate(d, a.model.conjugate_prior(p), a.model.phi, a.model.alpha, a.model.nu, opt);
    const auto preds = nngp::predict_conjugate(fit, sites.coords, sites.X);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      records.push_back(t_record(sites.coords[i], preds[i]));
      forecasts.emplace_back(preds[i].forecast());
    }
  } else {
    if (a.samples.empty()) throw Error(ErrorKind::configuration, "predict needs --samples from a fit");
    nngp::PosteriorSamples samples = nngp::read_samples(a.samples);
    nngp::PredictOptions po;
    po.stride = a.stride;
    po.seed = c.seed;
    nngp::ThreadBudgetScope budget(c.threads);
    const nngp::PriorSpec pr = a.model.priors(p);
    const nngp::PredictiveDraws pd =
        a.model.model == Model::response
            ? nngp::predict_response(nngp::response_fit_from_samples(d, pr, opt, std::move(samples)), sites.coords,
                                     sites.X, po)
            : nngp::predict_collapsed(nngp::collapsed_fit_from_samples(d, pr, opt, std::move(samples)),
                                      sites.coords, sites.X, po);
    const auto sums = pd.summaries();
    for (std::size_t i = 0; i < sums.size(); ++i) records.push_back({sites.coords[i], sums[i], std::nullopt});
    forecasts = pd.forecasts();
    if (!a.draws_out.empty()) nngp::write_prediction_draws(a.draws_out, pd.realization);
  }
  nngp::write_predictions(a.out, records);
  std::printf("wrote %zu predictions to %s\n", records.size(), a.out.c_str());

  nngp::RunReport rep = base_report("predict", c);
  if (sites.y) {
    rep.score = nngp::summarize(forecasts, std::span<const double>(sites.y->data(), sites.size()));
    print_score(*rep.score);
  }
  rep.timings = {{"predict_seconds", seconds_since(t0)}};
  maybe_write_report(c, rep);
  return 0;
}

int cmd_score(const Common& c, const ScoreArgs& a) {
  if (a.predictions.empty() || a.truth.empty())
    throw Error(ErrorKind::configuration, "score needs --predictions and --truth");
  const auto recs = nngp::read_predictions(a.predictions);
  nngp::DatasetSchema schema;
  schema.response = a.response;
  const nngp::PredictionSites truth = nngp::read_sites(a.truth, schema);
  if (!truth.y) throw Error(ErrorKind::configuration, a.truth + ": no '" + a.response + "' column");
  if (truth.size() != recs.size())
    throw Error(ErrorKind::dimension, "truth and predictions differ in row count");
  Eigen::MatrixXd draws;
  if (!a.draws.empty()) {
    draws = nngp::read_prediction_draws(a.draws);
    if (static_cast<std::size_t>(draws.rows()) != recs.size())
      throw Error(ErrorKind::dimension, "draws and predictions differ in row count");
  }
  std::vector<nngp::Forecast> f;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    if (draws.size() > 0) {
      const auto row = draws.row(static_cast<Eigen::Index>(i));
      f.emplace_back(nngp::SampleForecast{std::vector<double>(row.begin(), row.end()), r.summary.mean});
    } else if (r.t) {
      f.emplace_back(*r.t);
    } else {
      f.emplace_back(nngp::GaussianForecast{r.summary.mean, r.summary.sd});
    }
  }
  nngp::RunReport rep = base_report("score", c);
  rep.score = nngp::summarize(f, std::span<const double>(truth.y->data(), truth.size()));
  print_score(*rep.score);
  maybe_write_report(c, rep);
  return 0;
}

int cmd_diagnose(const Common& c, const DiagnoseArgs& a) {
  if (a.samples.empty()) throw Error(ErrorKind::configuration, "diagnose needs --samples");
  const nngp::PosteriorSamples s = nngp::read_samples(a.samples);
  nngp::ReportSection sec{"psrf", {}, {}};
  bool converged = true;
  std::printf("parameter,psrf\n");
  for (std::size_t k = 0; k < s.names.size(); ++k) {
    const double r = nngp::gelman_rubin(s.per_chain(k));
    converged = converged && r < a.threshold;
    sec.numbers.emplace_back(s.names[k], r);
    std::printf("%s,%.6f\n", s.names[k].c_str(), r);
  }
  std::printf("converged (all < %g): %s\n", a.threshold, converged ? "yes" : "no");
  sec.text.emplace_back("converged", converged ? "yes" : "no");
  nngp::RunReport rep = base_report("diagnose", c);
  rep.sections.push_back(sec);
  maybe_write_report(c, rep);
  return 0;
}

int cmd_bench(const Common& c, const BenchArgs& a) {
  std::vector<int> threads = a.thread_counts;
  if (threads.empty()) threads = {c.threads};
  if (a.iterations < 1) throw Error(ErrorKind::configuration, "bench needs at least one iteration");
  const nngp::NngpOptions opt = a.model.nngp();
  nngp::RunReport rep = base_report("bench", c);
  std::FILE* out = stdout;
  if (!a.out.empty()) {
    out = std::fopen(a.out.c_str(), "w");
    if (!out) throw Error(ErrorKind::io, "cannot write " + a.out);
  }
  std::fprintf(out, "model,n,threads,seconds_per_iteration\n");
  for (std::size_t n : a.sizes) {
    nngp::SimulationSpec spec;
    spec.n = n;
    spec.seed = c.seed;
    spec.dense_cap = std::min<std::size_t>(spec.dense_cap, 4000);
    const nngp::SpatialDataset d = nngp::simulate(spec);
    const nngp::OrderedProblem prob = nngp::prepare_problem(d, opt);
    const nngp::PriorSpec pr = a.model.priors(d.n_covariates());
    std::shared_ptr<const nngp::CollapsedStructure> structure;
    if (a.model.model == Model::collapsed)
      structure = std::make_shared<const nngp::CollapsedStructure>(prob.graph, opt.fill_ordering);
    for (int t : threads) {
      nngp::ThreadBudgetScope budget(t);
      std::vector<double> times;
      if (a.model.model == Model::conjugate) {
        const auto prior = nngp::ConjugatePrior::vague(d.n_covariates());
        for (std::size_t k = 0; k < a.iterations; ++k) {
          const auto t0 = Clock::now();
          nngp::fit_conjugate(d, prior, 6.0, 1.0, a.model.nu, opt);
          times.push_back(seconds_since(t0));
        }
      } else {
        nngp::Rng rng = nngp::make_rng(c.seed, n);
        std::unique_ptr<nngp::MarginalBackend> backend;
        if (a.model.model == Model::response)
          backend = std::make_unique<nngp::ResponseBackend>(prob.data, prob.graph, opt.jitter);
        else
          backend = std::make_unique<nngp::CollapsedBackend>(prob.data, structure, opt.jitter);
        nngp::MarginalSampler sampler(prob.data, pr, std::move(backend), nngp::initial_state(*prob.data, pr, rng),
                                      opt.initial_step);
        for (std::size_t k = 0; k < a.iterations; ++k) {
          const auto t0 = Clock::now();
          sampler.step(rng, false);
          times.push_back(seconds_since(t0));
        }
      }
      std::sort(times.begin(), times.end());
      const double median = times[times.size() / 2];
      std::fprintf(out, "%s,%zu,%d,%.6g\n", model_name(a.model.model), n, t, median);
      rep.timings.emplace_back(std::string(model_name(a.model.model)) + ".n" + std::to_string(n) + ".threads" +
                                   std::to_string(t),
                               median);
    }
  }
  if (out != stdout) std::fclose(out);
  maybe_write_report(c, rep);
  return 0;
}

}  // namespace cli
