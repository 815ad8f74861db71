#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nngp/conjugate.hpp"
#include "nngp/data.hpp"
#include "nngp/marginal.hpp"

namespace cli {

enum class Model { response, collapsed, conjugate };

// Resolved option values, as echoed into every report.
using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

struct Common {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string report;
  ConfigEcho echo;
};

struct DataOptions {
  std::string path;
  std::vector<std::string> covariates;
  bool no_intercept = false;
  bool average_duplicates = false;

  nngp::DatasetSchema schema() const;
};

struct ModelOptions {
  Model model = Model::response;
  std::size_t m = 15;
  std::string ordering = "coord_sum";
  std::string fill_ordering = "amd";
  double jitter = 0.0;
  std::vector<double> sigma2_prior{2.0, 1.0};
  std::vector<double> tau2_prior{2.0, 1.0};
  std::vector<double> phi_prior{3.0, 300.0};
  double nu = 0.5;
  std::vector<double> nu_prior;  // sampled when given
  std::vector<double> beta_mean;  // normal beta prior when given
  std::vector<double> beta_var;
  // Conjugate model.
  double phi = 0.0;
  double alpha = 0.0;
  double vague_variance = 1e6;

  nngp::NngpOptions nngp() const;
  nngp::PriorSpec priors(std::size_t p) const;
  nngp::ConjugatePrior conjugate_prior(std::size_t p) const;
};

struct McmcOptions {
  std::size_t chains = 3;
  std::size_t iterations = 25000;
  std::size_t burn_in = 15000;
  std::size_t thin = 1;

  nngp::McmcConfig config(const Common& common) const;
};

struct SimulateArgs {
  std::string out;
  std::size_t n = 1500;
  std::vector<double> beta{1.0, 5.0};
  double sigma2 = 1.0, tau2 = 1.0, phi = 6.0, nu = 0.5;
  std::size_t holdout = 0;
  std::string holdout_out;
  std::size_t dense_cap = 10000;
  std::size_t sim_m = 15;
};

struct FitArgs {
  DataOptions data;
  ModelOptions model;
  McmcOptions mcmc;
  std::string samples;
};

struct CvArgs {
  DataOptions data;
  ModelOptions model;
  std::size_t folds = 5;
  std::size_t n_phi = 15;
  std::size_t n_alpha = 15;
  std::vector<double> alpha_range{1e-3, 10.0};
  std::string grid_out;
};

struct PredictArgs {
  DataOptions data;
  ModelOptions model;
  std::string sites;
  std::string samples;
  std::size_t stride = 1;
  std::string out;
  std::string draws_out;
};

struct ScoreArgs {
  std::string predictions;
  std::string truth;
  std::string draws;
  std::string response = "y";
};

struct DiagnoseArgs {
  std::string samples;
  double threshold = 1.1;
};

struct BenchArgs {
  ModelOptions model;
  std::vector<std::size_t> sizes{10000, 20000};
  std::vector<int> thread_counts;
  std::size_t iterations = 10;
  std::string out;
};

int cmd_simulate(const Common& c, const SimulateArgs& a);
int cmd_fit(const Common& c, const FitArgs& a);
int cmd_cv(const Common& c, const CvArgs& a);
int cmd_predict(const Common& c, const PredictArgs& a);
int cmd_score(const Common& c, const ScoreArgs& a);
int cmd_diagnose(const Common& c, const DiagnoseArgs& a);
int cmd_bench(const Common& c, const BenchArgs& a);

}  // namespace cli
