#include "nngp/covariance.hpp"

#include <cmath>
#include <string>

#include "nngp/error.hpp"

namespace nngp {

namespace {

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

void check_shape(double phi, double nu) {
  if (!positive_finite(phi) || !positive_finite(nu)) {
    throw Error(ErrorKind::parameter_domain,
                "correlation requires finite phi > 0 and nu > 0 (phi=" +
                    std::to_string(phi) + ", nu=" + std::to_string(nu) + ")");
  }
}

}  // namespace

void CovarianceParams::validate() const {
  if (!positive_finite(sigma2) || !positive_finite(phi) || !positive_finite(nu) ||
      !std::isfinite(tau2) || tau2 < 0.0) {
    throw Error(ErrorKind::parameter_domain,
                "covariance parameters out of domain (sigma2=" + std::to_string(sigma2) +
                    ", phi=" + std::to_string(phi) + ", nu=" + std::to_string(nu) +
                    ", tau2=" + std::to_string(tau2) + ")");
  }
}

CovarianceFamily family_for(double nu) noexcept {
  if (nu == 0.5) return CovarianceFamily::exponential;
  if (nu == 1.5) return CovarianceFamily::matern_32;
  if (nu == 2.5) return CovarianceFamily::matern_52;
  return CovarianceFamily::matern_general;
}

double matern_correlation_bessel(double d, double phi, double nu) {
  check_shape(phi, nu);
  if (!(d >= 0.0) || !std::isfinite(d)) {
    throw Error(ErrorKind::parameter_domain, "distance must be finite and >= 0");
  }
  if (d == 0.0) return 1.0;
  const double x = d * phi;
  // K_nu underflows well before x^nu overflows; the product is exactly 0 there.
  if (x > 700.0) return 0.0;
  const double log_scale = (1.0 - nu) * std::log(2.0) - std::lgamma(nu);
  return std::exp(log_scale + nu * std::log(x)) * std::cyl_bessel_k(nu, x);
}

double matern(double d, double sigma2, double phi, double nu) {
  if (!positive_finite(sigma2)) {
    throw Error(ErrorKind::parameter_domain, "sigma2 must be finite and > 0");
  }
  if (!(d >= 0.0) || !std::isfinite(d)) {
    throw Error(ErrorKind::parameter_domain, "distance must be finite and >= 0");
  }
  return sigma2 * Correlation(phi, nu)(d);
}

Correlation::Correlation(CovarianceFamily family, double phi, double nu)
    : family_(family), phi_(phi), nu_(nu), scale_(0.0) {
  check_shape(phi, nu);
  const double expected = family == CovarianceFamily::exponential ? 0.5
                          : family == CovarianceFamily::matern_32 ? 1.5
                          : family == CovarianceFamily::matern_52 ? 2.5
                                                                  : nu;
  if (expected != nu) {
    throw Error(ErrorKind::parameter_domain,
                "closed-form covariance family requires nu=" + std::to_string(expected));
  }
  scale_ = std::exp((1.0 - nu) * std::log(2.0) - std::lgamma(nu));
}

double Correlation::operator()(double d) const noexcept {
  if (d == 0.0) return 1.0;
  const double x = d * phi_;
  switch (family_) {
    case CovarianceFamily::exponential:
      return std::exp(-x);
    case CovarianceFamily::matern_32:
      return (1.0 + x) * std::exp(-x);
    case CovarianceFamily::matern_52:
      return (1.0 + x + x * x / 3.0) * std::exp(-x);
    case CovarianceFamily::matern_general:
      break;
  }
  if (x > 700.0) return 0.0;
  return scale_ * std::pow(x, nu_) * std::cyl_bessel_k(nu_, x);
}

CovarianceModel::CovarianceModel(const CovarianceParams& params)
    : CovarianceModel(family_for(params.nu), params) {}

CovarianceModel::CovarianceModel(CovarianceFamily family, const CovarianceParams& params)
    : params_(params), corr_((params.validate(), family), params.phi, params.nu) {}

Eigen::MatrixXd cov_block(std::span<const Point> rows, std::span<const Point> cols,
                          const CovarianceModel& model, bool add_nugget_on_diagonal) {
  for (const auto& p : rows) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw Error(ErrorKind::parameter_domain, "non-finite coordinate");
    }
  }
  for (const auto& p : cols) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw Error(ErrorKind::parameter_domain, "non-finite coordinate");
    }
  }
  const auto nr = static_cast<Eigen::Index>(rows.size());
  const auto nc = static_cast<Eigen::Index>(cols.size());
  Eigen::MatrixXd out(nr, nc);
  for (Eigen::Index j = 0; j < nc; ++j) {
    for (Eigen::Index i = 0; i < nr; ++i) {
      out(i, j) = model(rows[i], cols[j], add_nugget_on_diagonal);
    }
  }
  return out;
}

Eigen::MatrixXd corr_plus_alpha_block(std::span<const Point> rows,
                                      std::span<const Point> cols, double phi,
                                      double nu, double alpha) {
  CovarianceParams unit{1.0, phi, nu, alpha};
  return cov_block(rows, cols, CovarianceModel(unit), true);
}

}  // namespace nngp
