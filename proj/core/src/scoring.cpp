#include "nngp/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/distributions/students_t.hpp>

#include "nngp/error.hpp"

namespace nngp {

namespace {

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double std_normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

void check_scale(double s, const char* what) {
  if (!(s > 0.0) || !std::isfinite(s))
    throw Error(ErrorKind::parameter_domain, std::string(what) + " must be positive and finite");
}

}  // namespace

double crps_gaussian(double mu, double sigma, double y) {
  check_scale(sigma, "CRPS sigma");
  const double z = (y - mu) / sigma;
  return sigma * (z * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * std_normal_pdf(z) -
                  1.0 / std::sqrt(std::numbers::pi));
}

double crps_student_t(double location, double scale, double dof, double y) {
  check_scale(scale, "CRPS scale");
  if (!(dof > 1.0)) throw Error(ErrorKind::parameter_domain, "Student-t CRPS needs dof > 1");
  const boost::math::students_t dist(dof);
  const double z = (y - location) / scale;
  const double F = boost::math::cdf(dist, z);
  const double f = boost::math::pdf(dist, z);
  // B(1/2, nu - 1/2) / B(1/2, nu/2)^2 through log-gamma for large dof.
  const double lg_half = std::lgamma(0.5);
  const double log_b1 = lg_half + std::lgamma(dof - 0.5) - std::lgamma(dof);
  const double log_b2 = lg_half + std::lgamma(0.5 * dof) - std::lgamma(0.5 * (dof + 1.0));
  const double tail = 2.0 * std::sqrt(dof) / (dof - 1.0) * std::exp(log_b1 - 2.0 * log_b2);
  return scale * (z * (2.0 * F - 1.0) + 2.0 * f * (dof + z * z) / (dof - 1.0) - tail);
}

double crps_samples(std::span<const double> draws, double y) {
  const std::size_t n = draws.size();
  if (n < 2) throw Error(ErrorKind::configuration, "sample CRPS needs at least two draws");
  std::vector<double> x(draws.begin(), draws.end());
  std::sort(x.begin(), x.end());
  double abs_err = 0.0;
  for (double v : x) abs_err += std::abs(v - y);
  // sum_{i,j} |x_i - x_j| = 2 sum_k (2k - n - 1) x_(k), k = 1..n
  double spread = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    spread += (2.0 * static_cast<double>(k + 1) - static_cast<double>(n) - 1.0) * x[k];
  const double dn = static_cast<double>(n);
  return abs_err / dn - spread / (dn * dn);
}

double quantile_type7(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorKind::configuration, "quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::parameter_domain, "quantile p outside [0,1]");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

PredictiveSummary summarize_draws(std::span<const double> draws) {
  if (draws.empty()) throw Error(ErrorKind::configuration, "no predictive draws");
  std::vector<double> x(draws.begin(), draws.end());
  std::sort(x.begin(), x.end());
  PredictiveSummary s;
  double sum = 0.0;
  for (double v : x) sum += v;
  s.mean = sum / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - s.mean) * (v - s.mean);
  s.sd = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
  s.median = quantile_type7(x, 0.5);
  s.q025 = quantile_type7(x, 0.025);
  s.q975 = quantile_type7(x, 0.975);
  return s;
}

double point_prediction(const Forecast& f) {
  if (const auto* s = std::get_if<SampleForecast>(&f)) return s->mean;
  if (const auto* g = std::get_if<GaussianForecast>(&f)) return g->mean;
  return std::get<StudentTForecast>(f).location;
}

std::pair<double, double> interval_95(const Forecast& f) {
  if (const auto* s = std::get_if<SampleForecast>(&f)) {
    std::vector<double> x = s->draws;
    std::sort(x.begin(), x.end());
    return {quantile_type7(x, 0.025), quantile_type7(x, 0.975)};
  }
  if (const auto* g = std::get_if<GaussianForecast>(&f)) {
    const double q = 1.959963984540054 * g->sd;
    return {g->mean - q, g->mean + q};
  }
  const auto& t = std::get<StudentTForecast>(f);
  const double q = boost::math::quantile(boost::math::students_t(t.dof), 0.975) * t.scale;
  return {t.location - q, t.location + q};
}

double crps(const Forecast& f, double y) {
  if (const auto* s = std::get_if<SampleForecast>(&f)) return crps_samples(s->draws, y);
  if (const auto* g = std::get_if<GaussianForecast>(&f)) return crps_gaussian(g->mean, g->sd, y);
  const auto& t = std::get<StudentTForecast>(f);
  return crps_student_t(t.location, t.scale, t.dof, y);
}

ScoreReport summarize(std::span<const Forecast> forecasts, std::span<const double> y) {
  if (forecasts.size() != y.size())
    throw Error(ErrorKind::dimension, "forecast and holdout lengths differ");
  if (y.empty()) throw Error(ErrorKind::configuration, "empty holdout set");
  ScoreReport r;
  r.n_holdout = y.size();
  double sse = 0.0, cr = 0.0, width = 0.0;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - point_prediction(forecasts[i]);
    sse += e * e;
    cr += crps(forecasts[i], y[i]);
    const auto [lo, hi] = interval_95(forecasts[i]);
    if (y[i] >= lo && y[i] <= hi) ++covered;
    width += hi - lo;
  }
  const double n = static_cast<double>(y.size());
  r.rmspe = std::sqrt(sse / n);
  r.crps = cr / n;
  r.pic_95 = 100.0 * static_cast<double>(covered) / n;
  r.piw_95 = width / n;
  return r;
}

}  // namespace nngp
