#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

namespace nngp {

/// CRPS of N(mu, sigma^2) at y.
double crps_gaussian(double mu, double sigma, double y);

/// CRPS of a location-scale Student-t with dof > 1 at y.
double crps_student_t(double location, double scale, double dof, double y);

/// Empirical CRPS mean|X_i - y| - 0.5 mean|X_i - X_j| over all ordered pairs.
/// Needs at least two draws.
double crps_samples(std::span<const double> draws, double y);

/// Type-7 (linear interpolation) quantile of an ascending sample.
double quantile_type7(std::span<const double> sorted, double p);

struct PredictiveSummary {
  double mean = 0.0;
  double sd = 0.0;
  double median = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
};

/// Moments and type-7 quantiles of a set of predictive draws.
PredictiveSummary summarize_draws(std::span<const double> draws);

/// Predictive draws with a point prediction (usually the average of the
/// per-draw conditional means, which is less noisy than the draw average).
struct SampleForecast {
  std::vector<double> draws;
  double mean = 0.0;
};

struct GaussianForecast {
  double mean = 0.0;
  double sd = 1.0;
};

struct StudentTForecast {
  double location = 0.0;
  double scale = 1.0;
  double dof = 3.0;
};

using Forecast = std::variant<SampleForecast, GaussianForecast, StudentTForecast>;

double point_prediction(const Forecast& f);
/// Central 95% interval: type-7 quantiles for samples, exact otherwise.
std::pair<double, double> interval_95(const Forecast& f);
double crps(const Forecast& f, double y);

struct ScoreReport {
  double crps = 0.0;
  double rmspe = 0.0;
  double pic_95 = 0.0;  // percent of holdout values inside their 95% interval
  double piw_95 = 0.0;  // mean interval width
  std::size_t n_holdout = 0;
};

ScoreReport summarize(std::span<const Forecast> forecasts, std::span<const double> y);

}  // namespace nngp
