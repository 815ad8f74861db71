#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "nngp/error.hpp"
#include "nngp/mcmc.hpp"

using namespace nngp;

namespace {

PriorSpec default_priors() {
  PriorSpec p;
  p.beta = BetaPrior::make_flat(2);
  return p;
}

// Random-walk MH on a scalar with a N(mean, sd^2) target.
class GaussianKernel : public ChainKernel {
 public:
  GaussianKernel(double mean, double sd, double step, double start)
      : mean_(mean), sd_(sd), step_(step), x_(start) {}

  std::vector<std::string> parameter_names() const override { return {"x"}; }
  void step(Rng& rng, bool) override {
    std::normal_distribution<double> nd;
    const double cand = x_ + step_ * nd(rng);
    ++proposed_;
    if (mh_accept(log_target(x_), log_target(cand), 0.0, rng)) {
      x_ = cand;
      ++accepted_;
    }
  }
  void record(std::span<double> out) const override { out[0] = x_; }
  double acceptance_rate() const override {
    return proposed_ ? static_cast<double>(accepted_) / static_cast<double>(proposed_) : 0.0;
  }
  void reset_acceptance() override { proposed_ = accepted_ = 0; }

 private:
  double log_target(double x) const { return -0.5 * (x - mean_) * (x - mean_) / (sd_ * sd_); }
  double mean_, sd_, step_, x_;
  std::size_t proposed_ = 0, accepted_ = 0;
};

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Monte Carlo standard error by batch means.
double batch_mcse(const Eigen::VectorXd& x, std::size_t batches) {
  const auto size = x.size() / static_cast<Eigen::Index>(batches);
  Eigen::VectorXd means(static_cast<Eigen::Index>(batches));
  for (std::size_t b = 0; b < batches; ++b) means[static_cast<Eigen::Index>(b)] = x.segment(static_cast<Eigen::Index>(b) * size, size).mean();
  const double mu = means.mean();
  const double var = (means.array() - mu).square().sum() / static_cast<double>(batches - 1);
  return std::sqrt(var / static_cast<double>(batches));
}

}  // namespace

TEST(InverseGamma, LogDensity) {
  const InverseGamma g{2.0, 1.0};
  EXPECT_NEAR(g.log_density(1.0), std::log(1.0) - 3.0 * std::log(1.0) - 1.0, 1e-14);
  EXPECT_NEAR(g.log_density(0.5), -std::lgamma(2.0) - 3.0 * std::log(0.5) - 2.0, 1e-14);
  EXPECT_EQ(g.log_density(-1.0), -std::numeric_limits<double>::infinity());
}

TEST(PriorSpec, Validation) {
  PriorSpec p = default_priors();
  EXPECT_NO_THROW(p.validate(2));
  EXPECT_THROW(p.validate(3), Error);
  p.phi = {5.0, 5.0};
  EXPECT_THROW(p.validate(2), Error);
  p = default_priors();
  p.sigma2.shape = 0.0;
  EXPECT_THROW(p.validate(2), Error);
  p = default_priors();
  p.nu = Uniform{0.1, 2.0};
  EXPECT_NO_THROW(p.validate(2));
  EXPECT_TRUE(p.in_support({1.0, 10.0, 0.7, 1.0}));
  EXPECT_FALSE(p.in_support({1.0, 10.0, 2.5, 1.0}));
}

TEST(BetaPrior, NormalStoresPrecision) {
  Eigen::Matrix2d v;
  v << 4.0, 1.0, 1.0, 2.0;
  const BetaPrior b = BetaPrior::make_normal(Eigen::Vector2d(1.0, -1.0), v);
  EXPECT_FALSE(b.flat);
  EXPECT_LT((b.precision * v - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(BetaPrior::make_flat(3).precision, Eigen::MatrixXd::Zero(3, 3));
}

TEST(Proposal, ZeroStepReturnsCurrent) {
  const PriorSpec pr = default_priors();
  CovarianceProposal prop(pr, 0.0);
  Rng rng = make_rng(1);
  const CovarianceParams cur{1.2, 7.0, 0.5, 0.4};
  const Proposal p = prop.propose(cur, rng);
  EXPECT_EQ(p.candidate.sigma2, cur.sigma2);
  EXPECT_EQ(p.candidate.phi, cur.phi);
  EXPECT_EQ(p.log_jacobian_ratio, 0.0);
}

TEST(Proposal, TransformRoundTrip) {
  PriorSpec pr = default_priors();
  pr.nu = Uniform{0.2, 3.0};
  CovarianceProposal prop(pr);
  const CovarianceParams cur{1.2, 7.0, 1.1, 0.4};
  const CovarianceParams back = prop.from_unconstrained(prop.to_unconstrained(cur), cur);
  EXPECT_NEAR(back.sigma2, cur.sigma2, 1e-14);
  EXPECT_NEAR(back.tau2, cur.tau2, 1e-14);
  EXPECT_NEAR(back.phi, cur.phi, 1e-12);
  EXPECT_NEAR(back.nu, cur.nu, 1e-13);
  // log|dtheta/dz| agrees with a finite difference of the inverse transform.
  Eigen::VectorXd z = prop.to_unconstrained(cur);
  const double h = 1e-6;
  double lj = 0.0;
  for (int k = 0; k < 4; ++k) {
    Eigen::VectorXd zp = z, zm = z;
    zp[k] += h;
    zm[k] -= h;
    const CovarianceParams a = prop.from_unconstrained(zp, cur), b = prop.from_unconstrained(zm, cur);
    const double fa[] = {a.sigma2, a.tau2, a.phi, a.nu}, fb[] = {b.sigma2, b.tau2, b.phi, b.nu};
    lj += std::log((fa[k] - fb[k]) / (2.0 * h));
  }
  EXPECT_NEAR(prop.log_jacobian(cur), lj, 1e-6);
}

TEST(Proposal, AlwaysInsideSupport) {
  const PriorSpec pr = default_priors();
  CovarianceProposal prop(pr, 5.0);
  Rng rng = make_rng(2);
  CovarianceParams cur{1.0, 5.0, 0.5, 1.0};
  for (int i = 0; i < 100000; ++i) {
    const Proposal p = prop.propose(cur, rng);
    ASSERT_TRUE(pr.in_support(p.candidate)) << i;
    if (i % 3 == 0) cur = p.candidate;
  }
}

TEST(Proposal, AdaptationReachesTargetRate) {
  // Target: the prior itself, which is proper in every coordinate.
  const PriorSpec pr = default_priors();
  CovarianceProposal prop(pr, 0.01);
  Rng rng = make_rng(3);
  CovarianceParams cur{1.0, 10.0, 0.5, 1.0};
  auto lp = [&](const CovarianceParams& t) { return pr.log_density(t); };
  for (int i = 0; i < 20000; ++i) {
    const Proposal p = prop.propose(cur, rng);
    const bool acc = mh_accept(lp(cur), lp(p.candidate), p.log_jacobian_ratio, rng);
    if (acc) cur = p.candidate;
    prop.adapt(cur, acc);
  }
  prop.freeze();
  const double scale = prop.scale();
  int accepted = 0;
  const int trials = 20000;
  for (int i = 0; i < trials; ++i) {
    const Proposal p = prop.propose(cur, rng);
    if (mh_accept(lp(cur), lp(p.candidate), p.log_jacobian_ratio, rng)) {
      cur = p.candidate;
      ++accepted;
    }
    prop.adapt(cur, true);  // ignored once frozen
  }
  EXPECT_EQ(prop.scale(), scale);
  const double rate = static_cast<double>(accepted) / trials;
  EXPECT_GE(rate, 0.25);
  EXPECT_LE(rate, 0.45);
}

TEST(MhAccept, Rules) {
  Rng rng = make_rng(4);
  for (int i = 0; i < 1000; ++i) EXPECT_TRUE(mh_accept(-3.0, -3.0, 0.0, rng));
  EXPECT_FALSE(mh_accept(-3.0, -std::numeric_limits<double>::infinity(), 10.0, rng));
  EXPECT_THROW(mh_accept(std::nan(""), -1.0, 0.0, rng), Error);
  EXPECT_THROW(mh_accept(-1.0, std::nan(""), 0.0, rng), Error);
}

TEST(MhAccept, FrequencyMatchesExpDelta) {
  Rng rng = make_rng(5);
  int acc = 0;
  const int trials = 100000;
  for (int i = 0; i < trials; ++i) acc += mh_accept(0.0, -0.5, -0.5, rng) ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(acc) / trials, std::exp(-1.0), 0.01);
}

TEST(GelmanRubin, SameDistributionNearOne) {
  Rng rng = make_rng(6);
  std::normal_distribution<double> nd;
  std::vector<std::vector<double>> chains(4, std::vector<double>(20000));
  for (auto& c : chains)
    for (auto& v : c) v = nd(rng);
  const double r = gelman_rubin(chains);
  EXPECT_GE(r, 0.99);
  EXPECT_LE(r, 1.01);
}

TEST(GelmanRubin, DisjointSupportsLarge) {
  Rng rng = make_rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<double>> chains(3, std::vector<double>(500));
  for (std::size_t c = 0; c < 3; ++c)
    for (auto& v : chains[c]) v = u(rng) + 2.0 * static_cast<double>(c);
  EXPECT_GT(gelman_rubin(chains), 1.2);
}

TEST(GelmanRubin, NoBetweenVarianceLimit) {
  std::vector<double> base(100);
  for (std::size_t i = 0; i < base.size(); ++i) base[i] = std::sin(static_cast<double>(i));
  std::vector<double> rev(base.rbegin(), base.rend());
  const double r = gelman_rubin({base, rev});
  EXPECT_NEAR(r, std::sqrt(99.0 / 100.0), 1e-12);
  EXPECT_LT(r, 1.0);
}

TEST(GelmanRubin, Errors) {
  const std::vector<double> c(20, 1.0);
  EXPECT_THROW(gelman_rubin({c, c}), Error);
  EXPECT_THROW(gelman_rubin({std::vector<double>(20, 0.5)}), Error);
  EXPECT_THROW(gelman_rubin({std::vector<double>(5, 0.5), std::vector<double>(5, 0.7)}), Error);
}

TEST(RunChains, ReproducibleAndDistinct) {
  McmcConfig cfg;
  cfg.n_chains = 3;
  cfg.n_iter = 2000;
  cfg.burn_in = 1000;
  cfg.seed = 99;
  auto factory = [](std::size_t, Rng&) { return std::make_unique<GaussianKernel>(1.0, 2.0, 3.0, 0.0); };
  const PosteriorSamples a = run_chains(factory, cfg);
  const PosteriorSamples b = run_chains(factory, cfg);
  ASSERT_EQ(a.n_chains(), 3u);
  EXPECT_EQ(a.retained_per_chain(), 1000u);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(a.chains[c], b.chains[c]);
  EXPECT_NE(a.chains[0], a.chains[1]);
  EXPECT_NE(a.chains[1], a.chains[2]);

  cfg.threads = 3;
  const PosteriorSamples threaded = run_chains(factory, cfg);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(a.chains[c], threaded.chains[c]);
}

TEST(RunChains, RetainedCountWithThinning) {
  McmcConfig cfg;
  cfg.n_chains = 2;
  cfg.n_iter = 1000;
  cfg.burn_in = 400;
  cfg.thin = 3;
  auto factory = [](std::size_t, Rng&) { return std::make_unique<GaussianKernel>(0.0, 1.0, 2.0, 0.0); };
  const PosteriorSamples s = run_chains(factory, cfg);
  EXPECT_EQ(s.total_retained(), 2u * (1000u - 400u) / 3u);
  cfg.seeds = {5, 5};
  EXPECT_THROW(run_chains(factory, cfg), Error);
  cfg.seeds = {};
  cfg.thin = 7;
  EXPECT_THROW(run_chains(factory, cfg), Error);
}

TEST(RunChains, ConjugateNormalPosteriorMean) {
  // y_i ~ N(mu, 1), mu ~ N(0, 10): mu | y ~ N(sum y / (n + 0.1), 1 / (n + 0.1)).
  const std::vector<double> y{1.2, 0.7, 2.1, 1.5, 0.9, 1.8, 1.1, 1.4};
  double sum = 0.0;
  for (double v : y) sum += v;
  const double prec = static_cast<double>(y.size()) + 0.1;
  const double post_mean = sum / prec, post_sd = std::sqrt(1.0 / prec);
  McmcConfig cfg;
  cfg.n_chains = 2;
  cfg.n_iter = 60000;
  cfg.burn_in = 10000;
  auto factory = [&](std::size_t, Rng&) {
    return std::make_unique<GaussianKernel>(post_mean, post_sd, 2.4 * post_sd, 0.0);
  };
  const PosteriorSamples s = run_chains(factory, cfg);
  const Eigen::VectorXd x = s.pooled(0);
  EXPECT_LT(std::abs(x.mean() - post_mean), 3.0 * batch_mcse(x, 50));
}

TEST(RunChains, KernelErrorNamesChainAndIteration) {
  class Failing : public ChainKernel {
   public:
    std::vector<std::string> parameter_names() const override { return {"x"}; }
    void step(Rng&, bool) override {
      if (++count_ == 7) throw FactorizationError(3, "boom");
    }
    void record(std::span<double> out) const override { out[0] = 0.0; }

   private:
    int count_ = 0;
  };
  McmcConfig cfg;
  cfg.n_chains = 2;
  cfg.n_iter = 20;
  cfg.burn_in = 10;
  try {
    run_chains([](std::size_t, Rng&) { return std::make_unique<Failing>(); }, cfg);
    FAIL() << "expected failure";
  } catch (const FactorizationError& e) {
    EXPECT_EQ(e.index(), 3u);
    EXPECT_NE(std::string(e.what()).find("iteration 6"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("chain 0"), std::string::npos) << e.what();
  }
}

TEST(MetropolisHastings, GaussianTargetQuantiles) {
  McmcConfig cfg;
  cfg.n_chains = 1;
  cfg.burn_in = 1000;
  cfg.thin = 20;
  cfg.n_iter = cfg.burn_in + 100000 * cfg.thin;
  auto factory = [](std::size_t, Rng&) { return std::make_unique<GaussianKernel>(0.0, 1.0, 2.4, 0.0); };
  const PosteriorSamples s = run_chains(factory, cfg);
  std::vector<double> x(s.chains[0].data(), s.chains[0].data() + s.chains[0].rows());
  std::sort(x.begin(), x.end());
  double ks = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = normal_cdf(x[i]);
    ks = std::max({ks, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
  }
  EXPECT_LT(ks, 1.63 / std::sqrt(n));
}
