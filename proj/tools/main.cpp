#include <cstdio>
#include <exception>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "nngp/error.hpp"
#include "nngp/parallel.hpp"

namespace {

int exit_code(nngp::ErrorKind kind) {
  using K = nngp::ErrorKind;
  switch (kind) {
    case K::configuration: return 2;
    case K::io: return 3;
    case K::parameter_domain: return 4;
    case K::duplicate_location: return 5;
    case K::factorization: return 6;
    case K::dimension: return 7;
    case K::numerical: return 8;
    case K::state: return 9;
  }
  return 10;
}

void add_common(CLI::App* app, cli::Common& c) {
  app->add_option("--config", "key = value file; command-line flags take precedence");
  app->add_option("--seed", c.seed, "Random seed")->required();
  app->add_option("--threads", c.threads, "Worker threads")
      ->envname("NNGP_NUM_THREADS")
      ->check(CLI::PositiveNumber);
  app->add_option("--report", c.report, "Write a JSON run report here");
}

void add_data(CLI::App* app, cli::DataOptions& d) {
  app->add_option("--data", d.path, "Training CSV")->required();
  app->add_option("--covariates", d.covariates, "Covariate columns (default: all others)")->delimiter(',');
  app->add_flag("--no-intercept", d.no_intercept, "Do not add an intercept column");
  app->add_flag("--average-duplicates", d.average_duplicates, "Average rows sharing a location");
}

void add_model(CLI::App* app, cli::ModelOptions& m, bool with_model) {
  static const std::map<std::string, cli::Model> models{
      {"response", cli::Model::response}, {"collapsed", cli::Model::collapsed}, {"conjugate", cli::Model::conjugate}};
  if (with_model)
    app->add_option_function<std::string>(
           "--model", [&m](const std::string& name) { m.model = models.at(CLI::detail::to_lower(name)); }, "response, collapsed or conjugate")
        ->check(CLI::IsMember({"response", "collapsed", "conjugate"}, CLI::ignore_case))
        ->default_str("response");
  app->add_option("--neighbors,-m", m.m, "Neighbor set size")->check(CLI::PositiveNumber);
  app->add_option("--ordering", m.ordering, "Location ordering")->check(CLI::IsMember({"coord_sum", "first_coord"}));
  app->add_option("--fill-ordering", m.fill_ordering, "Fill-reducing ordering for the collapsed model")
      ->check(CLI::IsMember({"amd", "rcm", "natural"}));
  app->add_option("--jitter", m.jitter, "Diagonal jitter added to neighbor blocks");
  app->add_option("--sigma2-prior", m.sigma2_prior, "IG shape,rate")->expected(2)->delimiter(',');
  app->add_option("--tau2-prior", m.tau2_prior, "IG shape,rate")->expected(2)->delimiter(',');
  app->add_option("--phi-prior", m.phi_prior, "Uniform lower,upper")->expected(2)->delimiter(',');
  app->add_option("--nu", m.nu, "Fixed smoothness");
  app->add_option("--nu-prior", m.nu_prior, "Sample nu under Uniform lower,upper")->expected(2)->delimiter(',');
  app->add_option("--beta-mean", m.beta_mean, "Normal beta prior mean")->delimiter(',');
  app->add_option("--beta-var", m.beta_var, "Normal beta prior variances")->delimiter(',');
  app->add_option("--phi", m.phi, "Conjugate model: fixed phi");
  app->add_option("--alpha", m.alpha, "Conjugate model: fixed tau2/sigma2");
  app->add_option("--vague-variance", m.vague_variance, "Conjugate model: variance replacing a flat beta prior");
}

void add_mcmc(CLI::App* app, cli::McmcOptions& o) {
  app->add_option("--chains", o.chains);
  app->add_option("--iterations", o.iterations);
  app->add_option("--burn-in", o.burn_in);
  app->add_option("--thin", o.thin);
}

bool given_on_command_line(const CLI::Option* opt, const std::vector<std::string>& args) {
  for (const std::string& a : args) {
    for (const auto& l : opt->get_lnames())
      if (a == "--" + l || a.rfind("--" + l + "=", 0) == 0) return true;
    for (const auto& s : opt->get_snames())
      if (a.rfind("-" + s, 0) == 0) return true;
  }
  return false;
}

// Subcommands cannot own a CLI11 config file, so `--config FILE` is expanded
// into the equivalent flags ahead of the explicit ones. Flags given on the
// command line win. Returns the arguments reversed, as App::parse expects.
std::vector<std::string> expand_config(CLI::App& app, int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> out;
  if (args.empty()) return out;
  CLI::App* sub = app.get_subcommand_no_throw(args.front());
  std::string file;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (sub != nullptr && args[i] == "--config" && i + 1 < args.size()) file = args[++i];
    else if (sub != nullptr && args[i].rfind("--config=", 0) == 0) file = args[i].substr(9);
    else rest.push_back(args[i]);
  }
  if (!file.empty()) {
    std::vector<std::string> injected;
    for (const CLI::ConfigItem& item : CLI::ConfigINI().from_file(file)) {
      if (item.name == "++" || item.name == "--") continue;
      const CLI::Option* opt = sub->get_option_no_throw("--" + item.name);
      if (opt == nullptr && item.name.size() == 1) opt = sub->get_option_no_throw("-" + item.name);
      if (opt == nullptr)
        throw CLI::ConfigError(file + ": unknown key '" + item.fullname() + "' for " + sub->get_name());
      if (given_on_command_line(opt, rest)) continue;
      const std::string flag = opt->get_lnames().empty() ? "-" + opt->get_snames().front()
                                                         : "--" + opt->get_lnames().front();
      if (opt->get_expected_min() == 0) {
        injected.push_back(flag + "=" + (item.inputs.empty() ? "true" : item.inputs.front()));
        continue;
      }
      injected.push_back(flag);
      injected.insert(injected.end(), item.inputs.begin(), item.inputs.end());
    }
    rest.insert(rest.begin() + 1, injected.begin(), injected.end());
  }
  out.assign(rest.rbegin(), rest.rend());
  return out;
}

std::string option_value(const CLI::Option* opt) {
  if (opt->get_expected_min() == 0) return opt->count() > 0 && opt->as<bool>() ? "true" : "false";
  std::string out;
  if (opt->count() == 0) {
    out = opt->get_default_str();
    if (out.size() >= 2 && (out.front() == '[' || out.front() == '{')) out = out.substr(1, out.size() - 2);
    return out;
  }
  for (const auto& r : opt->results()) out += (out.empty() ? "" : ",") + r;
  return out;
}

cli::ConfigEcho echo_config(const CLI::App* app) {
  cli::ConfigEcho echo;
  for (const CLI::Option* opt : app->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config") continue;
    echo.emplace_back(name, option_value(opt));
  }
  return echo;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nearest-neighbor Gaussian process spatial regression"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  cli::Common common;
  common.threads = nngp::default_thread_count();

  cli::SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Simulate a dataset from the exponential-covariance model");
  add_common(c_sim, common);
  c_sim->add_option("--out", sim.out, "Output CSV")->required();
  c_sim->add_option("-n", sim.n, "Locations on the unit square");
  c_sim->add_option("--beta", sim.beta)->delimiter(',');
  c_sim->add_option("--sigma2", sim.sigma2);
  c_sim->add_option("--tau2", sim.tau2);
  c_sim->add_option("--phi", sim.phi);
  c_sim->add_option("--nu", sim.nu);
  c_sim->add_option("--holdout", sim.holdout, "Rows to hold out");
  c_sim->add_option("--holdout-out", sim.holdout_out, "Holdout CSV");
  c_sim->add_option("--dense-cap", sim.dense_cap, "Largest n drawn with a dense Cholesky");
  c_sim->add_option("--sim-neighbors", sim.sim_m, "Neighbors for the sequential draw above the cap");

  cli::FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "Fit a model and write posterior samples");
  add_common(c_fit, common);
  add_data(c_fit, fit.data);
  add_model(c_fit, fit.model, true);
  add_mcmc(c_fit, fit.mcmc);
  c_fit->add_option("--samples", fit.samples, "Posterior samples CSV");

  cli::CvArgs cv;
  auto* c_cv = app.add_subcommand("cv", "Cross-validate the conjugate model over a (phi, alpha) grid");
  add_common(c_cv, common);
  add_data(c_cv, cv.data);
  add_model(c_cv, cv.model, false);
  c_cv->add_option("--folds", cv.folds);
  c_cv->add_option("--n-phi", cv.n_phi);
  c_cv->add_option("--n-alpha", cv.n_alpha);
  c_cv->add_option("--alpha-range", cv.alpha_range)->expected(2)->delimiter(',');
  c_cv->add_option("--grid-out", cv.grid_out, "Write the full score grid as CSV");

  cli::PredictArgs pred;
  auto* c_pred = app.add_subcommand("predict", "Predict at new locations");
  add_common(c_pred, common);
  add_data(c_pred, pred.data);
  add_model(c_pred, pred.model, true);
  c_pred->add_option("--sites", pred.sites, "CSV of prediction locations and covariates")->required();
  c_pred->add_option("--samples", pred.samples, "Posterior samples from fit");
  c_pred->add_option("--stride", pred.stride, "Use every stride-th retained draw")->check(CLI::PositiveNumber);
  c_pred->add_option("--out", pred.out, "Prediction summary CSV")->required();
  c_pred->add_option("--draws-out", pred.draws_out, "Per-site predictive draws CSV");

  cli::ScoreArgs score;
  auto* c_score = app.add_subcommand("score", "Score predictions against held-out values");
  add_common(c_score, common);
  c_score->add_option("--predictions", score.predictions)->required();
  c_score->add_option("--truth", score.truth)->required();
  c_score->add_option("--draws", score.draws, "Predictive draws; CRPS from the ensemble when given");
  c_score->add_option("--response", score.response);

  cli::DiagnoseArgs diag;
  auto* c_diag = app.add_subcommand("diagnose", "Convergence diagnostics for posterior samples");
  add_common(c_diag, common);
  c_diag->add_option("--samples", diag.samples)->required();
  c_diag->add_option("--threshold", diag.threshold);

  cli::BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Time MCMC iterations on simulated data");
  add_common(c_bench, common);
  add_model(c_bench, bench.model, true);
  c_bench->add_option("--sizes", bench.sizes)->delimiter(',');
  c_bench->add_option("--thread-counts", bench.thread_counts)->delimiter(',');
  c_bench->add_option("--iterations", bench.iterations);
  c_bench->add_option("--out", bench.out, "CSV of timings (default stdout)");

  try {
    app.parse(expand_config(app, argc, argv));
  } catch (const CLI::FileError& e) {
    std::fprintf(stderr, "error: kind=io message=%s\n", e.what());
    return 3;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: kind=configuration message=%s\n", e.what());
    return 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    common.echo = echo_config(sub);
    nngp::set_thread_budget(common.threads);
    if (sub == c_sim) return cli::cmd_simulate(common, sim);
    if (sub == c_fit) return cli::cmd_fit(common, fit);
    if (sub == c_cv) return cli::cmd_cv(common, cv);
    if (sub == c_pred) return cli::cmd_predict(common, pred);
    if (sub == c_score) return cli::cmd_score(common, score);
    if (sub == c_diag) return cli::cmd_diagnose(common, diag);
    return cli::cmd_bench(common, bench);
  } catch (const nngp::Error& e) {
    std::fprintf(stderr, "error: kind=%s message=%s\n", nngp::to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: kind=internal message=%s\n", e.what());
    return 10;
  }
}
