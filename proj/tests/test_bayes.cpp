#include <catch_amalgamated.hpp>
#include <random>

#include "abgreg/bayes.hpp"
#include "abgreg/error.hpp"
#include "oracles.hpp"

using namespace abgreg;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr int kDraws = 100000;

struct MomentStats {
  double mean = 0.0;
  double var = 0.0;
  double mean_se = 0.0;
  double var_se = 0.0;
};

MomentStats moments(const std::vector<double>& v) {
  const auto n = static_cast<double>(v.size());
  double m = 0.0;
  for (double x : v) m += x;
  m /= n;
  double m2 = 0.0, m4 = 0.0;
  for (double x : v) {
    const double d = (x - m) * (x - m);
    m2 += d;
    m4 += d * d;
  }
  m2 /= n;
  m4 /= n;
  return {m, m2 * n / (n - 1.0), std::sqrt(m2 / n), std::sqrt(std::max(m4 - m2 * m2, 0.0) / n)};
}

// True-moment check within `k` Monte Carlo standard errors.
void check_moments(const std::vector<double>& v, double mean, double var, double k = 3.0) {
  const MomentStats s = moments(v);
  CHECK(std::abs(s.mean - mean) <= k * s.mean_se);
  CHECK(std::abs(s.var - var) <= k * s.var_se);
}

CoefficientLikelihood scalar_likelihood(double estimate, double variance) {
  CoefficientLikelihood lik;
  lik.estimate = VectorXd::Constant(1, estimate);
  lik.covariance = MatrixXd::Constant(1, 1, variance);
  lik.shrink = {true};
  return lik;
}

YbarDraw zero_ybar() {
  return [](const VectorXd&, Rng&) { return 0.0; };
}

struct SurveySetup {
  FinitePopulation pop;
  Sample sample;
  AuxTotals aux;
};

SurveySetup linear_setup(Index N, Index n, Index p, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const MatrixXd x = oracle::random_matrix(N, p, gen).array() + 1.0;
  VectorXd beta = VectorXd::Zero(p);
  beta[0] = 1.0;
  if (p > 1) beta[1] = -0.5;
  const VectorXd y = (x * beta).array() + 2.0 * oracle::random_vector(N, gen).array();
  FinitePopulation pop(y, x);
  Sample s = draw_sample(pop, DesignSpec::srs(n), seed + 1);
  AuxTotals aux = AuxTotals::from_population(pop);
  return {std::move(pop), std::move(s), std::move(aux)};
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an abgreg::Error");
  return ErrorKind::Config;
}

}  // namespace

TEST_CASE("flat-prior draws have the likelihood's moments", "[bayes][statistical]") {
  const ShrinkageSampler sampler(scalar_likelihood(2.0, 0.25));
  Rng rng = make_rng(1);
  std::vector<double> v(kDraws);
  for (auto& x : v) x = sampler.draw_flat(rng)[0];
  check_moments(v, 2.0, 0.25);
}

TEST_CASE("a zero covariance is jittered, not rejected", "[bayes]") {
  const ShrinkageSampler sampler(scalar_likelihood(2.0, 0.0));
  REQUIRE(sampler.jitter() > 0.0);
  Rng rng = make_rng(2);
  std::vector<double> v(20000);
  for (auto& x : v) x = sampler.draw_flat(rng)[0];
  check_moments(v, 2.0, sampler.jitter(), 4.0);
}

TEST_CASE("coefficient conditional is the Gaussian conjugate update", "[bayes][statistical]") {
  CoefficientLikelihood lik;
  lik.estimate = Eigen::Vector2d(2.0, -1.0);
  lik.covariance.resize(2, 2);
  lik.covariance << 0.25, 0.05, 0.05, 0.16;
  lik.shrink = {true, false};
  const ShrinkageSampler sampler(lik);
  const VectorXd prior_var = Eigen::Vector2d(0.5, 123.0);  // second entry is ignored
  const MatrixXd prec = lik.covariance.inverse();
  MatrixXd a = prec;
  a(0, 0) += 1.0 / 0.5;
  const MatrixXd cov = a.inverse();
  const VectorXd mean = cov * prec * lik.estimate;
  Rng rng = make_rng(3);
  std::vector<double> b0(kDraws), b1(kDraws), cross(kDraws);
  for (int k = 0; k < kDraws; ++k) {
    const VectorXd b = sampler.draw_conditional_beta(prior_var, rng);
    b0[k] = b[0];
    b1[k] = b[1];
    cross[k] = (b[0] - mean[0]) * (b[1] - mean[1]);
  }
  check_moments(b0, mean[0], cov(0, 0));
  check_moments(b1, mean[1], cov(1, 1));
  const MomentStats c = moments(cross);
  CHECK(std::abs(c.mean - cov(0, 1)) <= 3.0 * c.mean_se);
}

TEST_CASE("Laplace global-scale conditional is Gamma(a + p, b + sum/2)", "[bayes][statistical]") {
  LaplacePrior prior;
  prior.a = 1.0;
  prior.b = 2.0;
  const VectorXd tau2 = Eigen::Vector2d(0.5, 1.5);  // Gamma(3, 3)
  Rng rng = make_rng(4);
  std::vector<double> v(kDraws);
  for (auto& x : v) x = conditional::laplace_lambda2(tau2, prior, rng);
  check_moments(v, 1.0, 1.0 / 3.0);
}

TEST_CASE("Laplace local-scale conditional is inverse Gaussian in 1/tau^2", "[bayes][statistical]") {
  const double beta = 0.5, lambda2 = 2.0;
  const double mu = std::sqrt(lambda2) / std::abs(beta);
  Rng rng = make_rng(5);
  std::vector<double> v(kDraws);
  for (auto& x : v) x = 1.0 / conditional::laplace_tau2(beta, lambda2, rng);
  check_moments(v, mu, mu * mu * mu / lambda2);
}

TEST_CASE("horseshoe conditionals have their inverse-gamma moments", "[bayes][statistical]") {
  Rng rng = make_rng(6);
  std::vector<double> v(kDraws);

  SECTION("local scale") {
    const double rate = 1.0 / 2.0 + 1.0 / (2.0 * 0.5);
    for (auto& x : v) x = 1.0 / conditional::horseshoe_u2(1.0, 0.5, 2.0, rng);
    check_moments(v, 1.0 / rate, 1.0 / (rate * rate));
  }
  SECTION("local scale median at beta near zero") {
    for (auto& x : v) x = conditional::horseshoe_u2(0.0, 1.0, 1.0, rng);
    std::sort(v.begin(), v.end());
    CHECK_THAT(quantile_sorted(v, 0.5), WithinRel(1.0 / std::log(2.0), 0.02));
  }
  SECTION("local auxiliary") {
    for (auto& x : v) x = 1.0 / conditional::horseshoe_xi(0.25, rng);
    check_moments(v, 1.0 / 5.0, 1.0 / 25.0);
  }
  SECTION("global scale") {
    const VectorXd beta = Eigen::Vector3d(0.5, -1.0, 2.0);
    const VectorXd u2 = Eigen::Vector3d(1.0, 2.0, 4.0);
    const double gamma = 0.5;
    const double shape = 2.0;
    const double rate = 1.0 / gamma + 0.5 * (0.25 / 1.0 + 1.0 / 2.0 + 4.0 / 4.0);
    for (auto& x : v) x = 1.0 / conditional::horseshoe_lambda2(beta, u2, gamma, rng);
    check_moments(v, shape / rate, shape / (rate * rate));
  }
  SECTION("global auxiliary") {
    for (auto& x : v) x = 1.0 / conditional::horseshoe_gamma(0.5, rng);
    check_moments(v, 1.0 / 3.0, 1.0 / 9.0);
  }
}

TEST_CASE("Laplace chain matches quadrature of normal times Laplace", "[bayes][oracle]") {
  const double beta_hat = 0.8, v = 0.3, lambda = 2.0;
  const oracle::Moments ref = oracle::laplace_posterior_quadrature(beta_hat, v, lambda);
  LaplacePrior prior;
  prior.fixed_lambda2 = lambda * lambda;
  const McmcConfig cfg{200000, 2000, 11, 1};
  const PosteriorDraws d = run_chain(scalar_likelihood(beta_hat, v), prior, cfg, zero_ybar());
  const double mean = d.beta.col(0).mean();
  const double sd = std::sqrt((d.beta.col(0).array() - mean).square().sum() / (cfg.n_draws - 1));
  CHECK_THAT(mean, WithinAbs(ref.mean, 0.01));
  CHECK_THAT(sd, WithinRel(ref.sd, 0.02));
  CHECK((d.lambda.array() == lambda).all());
}

TEST_CASE("horseshoe chain matches two-dimensional quadrature", "[bayes][oracle]") {
  const double beta_hat = 1.0, v = 0.5;
  const double ref = oracle::horseshoe_posterior_mean_quadrature(beta_hat, v);
  const McmcConfig cfg{400000, 5000, 12, 1};
  const PosteriorDraws d = run_chain(scalar_likelihood(beta_hat, v), HorseshoePrior{}, cfg, zero_ybar());
  CHECK_THAT(d.beta.col(0).mean(), WithinAbs(ref, 0.02));
  CHECK(ref < beta_hat);
  CHECK(ref > 0.0);
}

TEST_CASE("population-mean draw is normal around the GREG estimate", "[bayes][statistical]") {
  const SurveySetup su = linear_setup(2000, 100, 3, 21);
  const VectorXd beta = Eigen::Vector3d(0.9, -0.4, 0.1);
  const double mean = greg_mean(su.sample, su.aux, beta);
  const double var = variance_e(su.sample, beta);
  Rng rng = make_rng(7);
  std::vector<double> v(kDraws);
  for (auto& x : v) x = sample_ybar(su.sample, su.aux, beta, rng);
  check_moments(v, mean, var);

  // Exact fit: no residual variance, so the draw is the point estimate.
  const FinitePopulation exact(su.pop.x() * beta, su.pop.x());
  const Sample s = draw_sample(exact, DesignSpec::srs(50), 3);
  const AuxTotals aux = AuxTotals::from_population(exact);
  CHECK(sample_ybar(s, aux, beta, rng) == greg_mean(s, aux, beta));
}

TEST_CASE("flat-prior posterior of the mean is asymptotically normal", "[bayes][property]") {
  const SurveySetup su = linear_setup(20000, 2000, 5, 31);
  const RegressionFit fit = fit_wls(su.sample);
  const double center = greg_mean(su.sample, su.aux, fit.beta1);
  const double sd = std::sqrt(variance_e(su.sample, fit.beta1));
  const PosteriorDraws d = run_posterior(su.sample, su.aux, FlatPrior{}, McmcConfig{2000, 0, 32, 1});
  const std::vector<double> v(d.ybar.data(), d.ybar.data() + d.ybar.size());
  CHECK(oracle::ks_distance_normal(v, center, sd) <= 0.05);
  CHECK(std::abs(posterior_mean(d) - center) <= 0.5 * sd);
  CHECK(d.lambda.size() == 0);
}

TEST_CASE("shrinkage priors beat the raw estimate on a null signal", "[bayes][property]") {
  int laplace_wins = 0, horseshoe_wins = 0;
  const int runs = 50;
  std::mt19937_64 gen(41);
  for (int r = 0; r < runs; ++r) {
    const Index p = 10;
    const MatrixXd a = oracle::random_matrix(p, p, gen);
    MatrixXd cov = 0.02 * (a * a.transpose() / static_cast<double>(p));
    cov.diagonal().array() += 0.02;
    const VectorXd estimate = cov.llt().matrixL() * oracle::random_vector(p, gen);
    CoefficientLikelihood lik{estimate, cov, std::vector<bool>(p, true)};
    const McmcConfig cfg{1000, 200, static_cast<std::uint64_t>(100 + r), 1};
    const double raw = estimate.squaredNorm();
    const VectorXd lap = run_chain(lik, LaplacePrior{}, cfg, zero_ybar()).beta.colwise().mean();
    const VectorXd hs = run_chain(lik, HorseshoePrior{}, cfg, zero_ybar()).beta.colwise().mean();
    laplace_wins += lap.squaredNorm() < raw;
    horseshoe_wins += hs.squaredNorm() < raw;
  }
  CHECK(laplace_wins >= 45);
  CHECK(horseshoe_wins >= 45);
}

TEST_CASE("the lasso solution is a Laplace posterior mode", "[bayes][property]") {
  // With the coefficient precision proportional to the centred weighted Gram
  // matrix G, the posterior-mode objective is the lasso objective divided by
  // 2c, c = tr(G) / tr(V^{-1}); hence lambda_lasso = 2 c lambda_laplace.
  const SurveySetup su = linear_setup(5000, 300, 4, 51);
  const VectorXd w = su.sample.weights();
  const MatrixXd& x = su.sample.x();
  const RegressionFit fit = fit_wls(su.sample);
  const VectorXd xm = x.transpose() * w / w.sum();
  const MatrixXd xc = x.rowwise() - xm.transpose();
  const MatrixXd gram = xc.transpose() * w.asDiagonal() * xc;
  const MatrixXd v = fit.vbeta11();
  const MatrixXd vinv_prop = gram * (v.inverse().trace() / gram.trace());
  const double c = gram.trace() / vinv_prop.trace();
  for (double lambda_b : {1.0, 10.0, 60.0}) {
    PenalizedOptions opts;
    opts.standardize = false;
    opts.tol = 1e-13;
    const PenalizedFit pf = fit_penalized(x, su.sample.y(), w, LassoPenalty{2.0 * c * lambda_b}, opts);
    // Subgradient of (b - bhat)' P (b - bhat) / 2 + lambda_b |b|_1 at the lasso solution.
    const VectorXd grad = vinv_prop * (pf.beta1 - fit.beta1);
    double worst = 0.0;
    for (Index j = 0; j < 4; ++j) {
      const double viol = pf.beta1[j] != 0.0
                              ? std::abs(grad[j] + lambda_b * (pf.beta1[j] > 0 ? 1.0 : -1.0))
                              : std::max(0.0, std::abs(grad[j]) - lambda_b);
      worst = std::max(worst, viol);
    }
    CHECK(worst <= 1e-6 * std::max(1.0, lambda_b));
  }
}

TEST_CASE("chains are deterministic in the seed", "[bayes]") {
  const SurveySetup su = linear_setup(1000, 80, 3, 61);
  for (const PriorSpec& prior : {PriorSpec{FlatPrior{}}, PriorSpec{LaplacePrior{}}, PriorSpec{HorseshoePrior{}}}) {
    const McmcConfig cfg{300, 50, 9, 2};
    const PosteriorDraws a = run_posterior(su.sample, su.aux, prior, cfg);
    const PosteriorDraws b = run_posterior(su.sample, su.aux, prior, cfg);
    CHECK(a.beta == b.beta);
    CHECK(a.ybar == b.ybar);
    CHECK(a.lambda == b.lambda);
    const PosteriorDraws c = run_posterior(su.sample, su.aux, prior, McmcConfig{300, 50, 10, 2});
    CHECK(a.ybar != c.ybar);
  }
}

TEST_CASE("draw containers have the requested shape", "[bayes]") {
  const SurveySetup su = linear_setup(1000, 60, 3, 71);
  const PosteriorDraws one = run_posterior(su.sample, su.aux, HorseshoePrior{}, McmcConfig{1, 0, 1, 1});
  CHECK(one.beta.rows() == 1);
  CHECK(one.beta.cols() == 3);
  CHECK(one.ybar.size() == 1);
  CHECK(one.lambda.size() == 1);
  CHECK(kind_of([&] { summarize(one, 0.95); }) == ErrorKind::Data);
  const PosteriorDraws thin = run_posterior(su.sample, su.aux, LaplacePrior{}, McmcConfig{5, 3, 1, 4});
  CHECK(thin.beta.rows() == 5);
  CHECK(kind_of([] { McmcConfig{0, 0, 1, 1}.validate(); }) == ErrorKind::Config);
  CHECK(kind_of([] { McmcConfig{10, -1, 1, 1}.validate(); }) == ErrorKind::Config);
  CHECK(kind_of([] { McmcConfig{10, 0, 1, 0}.validate(); }) == ErrorKind::Config);
  LaplacePrior bad;
  bad.a = 0.0;
  CHECK(kind_of([&] { run_posterior(su.sample, su.aux, bad, McmcConfig{5, 0, 1, 1}); }) == ErrorKind::Config);
}

TEST_CASE("equal-tailed intervals use type-7 quantiles", "[bayes]") {
  CHECK(quantile_sorted({1.0, 2.0, 3.0, 4.0}, 0.25) == 1.75);
  CHECK(quantile_sorted({1.0, 2.0, 3.0, 4.0}, 0.0) == 1.0);
  CHECK(quantile_sorted({1.0, 2.0, 3.0, 4.0}, 1.0) == 4.0);
  CHECK(quantile_sorted({5.0}, 0.3) == 5.0);
  CHECK(kind_of([] { quantile_sorted({}, 0.5); }) == ErrorKind::Data);

  PosteriorDraws d;
  d.ybar.resize(100);
  for (Index k = 0; k < 100; ++k) d.ybar[k] = static_cast<double>(99 - k);
  const PosteriorSummary s = summarize(d, 0.9);
  CHECK_THAT(s.point, WithinAbs(49.5, 1e-12));
  CHECK_THAT(s.lower, WithinAbs(4.95, 1e-12));
  CHECK_THAT(s.upper, WithinAbs(94.05, 1e-12));
  CHECK(s.n_draws == 100);
  CHECK(kind_of([&] { summarize(d, 1.0); }) == ErrorKind::Config);
}
