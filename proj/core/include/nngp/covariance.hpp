#pragma once

#include <span>

#include <Eigen/Core>

#include "nngp/point.hpp"

namespace nngp {

/// Matérn covariance parameters. `tau2` is the nugget (measurement error)
/// variance and is only added on exactly coincident locations.
struct CovarianceParams {
  double sigma2 = 1.0;
  double phi = 1.0;
  double nu = 0.5;
  double tau2 = 0.0;

  /// Noise-to-signal ratio tau2 / sigma2.
  double alpha() const noexcept { return tau2 / sigma2; }

  /// Throws a parameter_domain Error unless sigma2, phi, nu > 0 and tau2 >= 0
  /// are all finite.
  void validate() const;
};

enum class CovarianceFamily {
  matern_general,
  exponential,  // nu = 1/2
  matern_32,    // nu = 3/2
  matern_52,    // nu = 5/2
};

/// The family whose closed form applies at `nu`, or matern_general.
CovarianceFamily family_for(double nu) noexcept;

/// Matérn correlation at distance `d` evaluated through the Bessel K_nu
/// form, with no half-integer shortcut.
double matern_correlation_bessel(double d, double phi, double nu);

/// Matérn covariance sigma2 * 2^(1-nu)/Gamma(nu) * (d phi)^nu K_nu(d phi),
/// with value sigma2 at d = 0. Half-integer smoothness uses closed forms.
double matern(double d, double sigma2, double phi, double nu);

/// Precomputed correlation kernel for one (family, phi, nu) setting. Cheap to
/// copy and safe to share across threads.
class Correlation {
 public:
  Correlation(CovarianceFamily family, double phi, double nu);
  Correlation(double phi, double nu) : Correlation(family_for(nu), phi, nu) {}

  double operator()(double d) const noexcept;

  CovarianceFamily family() const noexcept { return family_; }
  double phi() const noexcept { return phi_; }
  double nu() const noexcept { return nu_; }

 private:
  CovarianceFamily family_;
  double phi_;
  double nu_;
  double scale_;  // 2^(1-nu) / Gamma(nu)
};

/// A covariance family together with its parameters.
class CovarianceModel {
 public:
  /// Picks the closed-form family when nu is 0.5, 1.5 or 2.5.
  explicit CovarianceModel(const CovarianceParams& params);
  /// Forces `family`; throws parameter_domain when a shortcut family is paired
  /// with a different nu.
  CovarianceModel(CovarianceFamily family, const CovarianceParams& params);

  const CovarianceParams& params() const noexcept { return params_; }
  CovarianceFamily family() const noexcept { return corr_.family(); }

  /// Spatial covariance at distance d, without the nugget.
  double covariance(double d) const noexcept { return params_.sigma2 * corr_(d); }

  /// Covariance between two locations; the nugget is added only when
  /// `add_nugget` is set and the locations coincide exactly.
  double operator()(const Point& a, const Point& b, bool add_nugget) const noexcept {
    double c = covariance(distance(a, b));
    if (add_nugget && a == b) c += params_.tau2;
    return c;
  }

 private:
  CovarianceParams params_;
  Correlation corr_;
};

/// Dense covariance block between `rows` and `cols`.
Eigen::MatrixXd cov_block(std::span<const Point> rows, std::span<const Point> cols,
                          const CovarianceModel& model, bool add_nugget_on_diagonal);

/// Dense block of the correlation matrix plus alpha on coincident locations.
Eigen::MatrixXd corr_plus_alpha_block(std::span<const Point> rows,
                                      std::span<const Point> cols, double phi,
                                      double nu, double alpha);

}  // namespace nngp
