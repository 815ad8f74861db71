#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "nngp/covariance.hpp"
#include "nngp/mcmc.hpp"
#include "nngp/point.hpp"
#include "nngp/scoring.hpp"

namespace nngp {

struct SpatialDataset {
  std::vector<Point> coords;
  Eigen::VectorXd y;
  Eigen::MatrixXd X;                        // n x p, first column the intercept by convention
  std::vector<std::string> covariate_names;  // one per column of X
  std::optional<Eigen::VectorXd> true_w;     // set by simulate()

  std::size_t size() const noexcept { return coords.size(); }
  std::size_t n_covariates() const noexcept { return static_cast<std::size_t>(X.cols()); }

  /// Sizes agree, values finite, p >= 1 and no coordinate appears twice.
  void validate() const;
  SpatialDataset subset(std::span<const std::size_t> rows) const;
};

struct DatasetSchema {
  std::string coord_x = "coord_x";
  std::string coord_y = "coord_y";
  std::string response = "y";
  /// Covariate columns; empty means every other column except `true_w`.
  std::vector<std::string> covariates;
  std::string true_w = "w";  // read into SpatialDataset::true_w when present
  bool add_intercept = true;
  /// Average rows that share a coordinate instead of rejecting the file.
  bool average_duplicates = false;
};

/// Reads a comma-delimited file with a header row. Errors name the file and
/// the 1-based data row.
SpatialDataset read_dataset(const std::string& path, const DatasetSchema& schema = {});

/// Prediction locations with their covariates. The response column is
/// optional and kept for scoring when present; duplicates are allowed.
struct PredictionSites {
  std::vector<Point> coords;
  Eigen::MatrixXd X;
  std::optional<Eigen::VectorXd> y;

  std::size_t size() const noexcept { return coords.size(); }
};

PredictionSites read_sites(const std::string& path, const DatasetSchema& schema = {});

/// Writes coord_x, coord_y, y, the non-intercept covariates and w (when
/// known) with 17 significant digits.
void write_dataset(const std::string& path, const SpatialDataset& data);

struct DataSplit {
  SpatialDataset train;
  SpatialDataset holdout;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> holdout_rows;
};

/// Random disjoint split with `holdout` rows held out.
DataSplit split(const SpatialDataset& data, std::size_t holdout, std::uint64_t seed);
/// Same with a fraction in (0, 1), rounded to the nearest count.
DataSplit split_fraction(const SpatialDataset& data, double fraction, std::uint64_t seed);

struct SimulationSpec {
  std::size_t n = 1500;
  double x_min = 0.0, x_max = 1.0;
  double y_min = 0.0, y_max = 1.0;
  Eigen::VectorXd beta = Eigen::Vector2d(1.0, 5.0);
  CovarianceParams params{1.0, 6.0, 0.5, 1.0};
  std::uint64_t seed = 1;
  /// Up to this size w is drawn through a dense Cholesky of C.
  std::size_t dense_cap = 10000;
  /// Neighbors for the sequential NNGP draw above the dense cap.
  std::size_t sim_m = 15;

  void validate() const;
};

/// Uniform locations in the box, X = [1, N(0,1) columns], w ~ GP(0, C),
/// y = X beta + w + tau z.
SpatialDataset simulate(const SimulationSpec& spec);

/// chain, iter, then one column per parameter.
void write_samples(const std::string& path, const PosteriorSamples& samples);
PosteriorSamples read_samples(const std::string& path);

struct PredictionRecord {
  Point site;
  PredictiveSummary summary;
  std::optional<StudentTForecast> t;  // conjugate predictions only
};

void write_predictions(const std::string& path, std::span<const PredictionRecord> records);
std::vector<PredictionRecord> read_predictions(const std::string& path);

/// Draws per site, one row per site.
void write_prediction_draws(const std::string& path, const Eigen::MatrixXd& draws);
Eigen::MatrixXd read_prediction_draws(const std::string& path);

struct ReportSection {
  std::string name;
  std::vector<std::pair<std::string, std::string>> text;
  std::vector<std::pair<std::string, double>> numbers;
};

struct RunReport {
  std::string command;
  /// The resolved configuration, emitted verbatim.
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::uint64_t> seeds;
  std::optional<ScoreReport> score;
  std::vector<ReportSection> sections;
  /// Wall-clock fields; the only part of a report that varies between
  /// identical runs.
  std::vector<std::pair<std::string, double>> timings;
};

/// JSON report.
void write_report(const std::string& path, const RunReport& report);

}  // namespace nngp
