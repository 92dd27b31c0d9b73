// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "abgreg/bayes.hpp"
#include "abgreg/cli.hpp"
#include "abgreg/glm.hpp"
#include "abgreg/harness.hpp"
#include "abgreg/regfit.hpp"
#include "abgreg/survey.hpp"
#include "oracles.hpp"

using namespace abgreg;
using nlohmann::json;

namespace {

// Accumulates named checks for one criterion.
class Criterion {
 public:
  explicit Criterion(std::string name) : name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      failed_ += (failed_.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : ", ") + s; }

  bool report() const {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::printf("%s %s (%.1fs) %s%s%s\n", pass_ ? "PASS" : "FAIL", name_.c_str(), secs, notes_.c_str(),
                failed_.empty() ? "" : " | failed: ", failed_.c_str());
    std::fflush(stdout);
    return pass_;
  }

 private:
  std::string name_;
  std::chrono::steady_clock::time_point start_;
  bool pass_ = true;
  std::string failed_;
  std::string notes_;
};

std::string fmt(const char* format, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, a);
  return buf;
}

bool within_rel_band(double ratio, double reference, double tol) {
  return ratio >= (1.0 - tol) * reference && ratio <= (1.0 + tol) * reference;
}

ScenarioConfig linear_study() {
  ScenarioConfig cfg;
  cfg.kind = ScenarioKind::Linear;
  cfg.N = 10000;
  cfg.p_star = 50;
  cfg.p = 50;
  cfg.n = 300;
  cfg.reps = 200;
  cfg.mcmc = McmcConfig{2000, 200, 0, 1};
  cfg.methods = {Method::Greg, Method::GregLasso, Method::Ab, Method::AbHorseshoe, Method::Ht};
  cfg.seed = 1;
  return cfg;
}

void criterion_linear_ordering(Criterion& c, const MetricsTable& t) {
  const double greg = t.at(Method::Greg).rmse, lasso = t.at(Method::GregLasso).rmse;
  const double ab = t.at(Method::Ab).rmse, abh = t.at(Method::AbHorseshoe).rmse, ht = t.at(Method::Ht).rmse;
  c.note("RMSE x100 GREG " + fmt("%.2f", 100 * greg) + " GREG-L " + fmt("%.2f", 100 * lasso) + " AB " +
         fmt("%.2f", 100 * ab) + " ABH " + fmt("%.2f", 100 * abh) + " HT " + fmt("%.2f", 100 * ht));
  for (const auto& m : t.methods) c.check(m.completed == t.reps, to_string(m.method) + " incomplete");
  c.check(lasso < greg, "RMSE(GREG-L) < RMSE(GREG)");
  c.check(abh <= ab, "RMSE(ABH) <= RMSE(AB)");
  c.check(ht > 1.3 * greg, "RMSE(HT) > 1.3 RMSE(GREG)");
  c.check(within_rel_band(lasso / greg, 11.8 / 12.3, 0.15), "GREG-L/GREG ratio band");
  c.check(within_rel_band(abh / ab, 11.8 / 12.4, 0.15), "ABH/AB ratio band");
  c.check(within_rel_band(ht / greg, 17.5 / 12.3, 0.15), "HT/GREG ratio band");
}

void criterion_linear_coverage(Criterion& c, const MetricsTable& t) {
  const MethodMetrics& ab = t.at(Method::Ab);
  const MethodMetrics& greg = t.at(Method::Greg);
  c.note("CP AB " + fmt("%.1f", ab.cp) + " GREG " + fmt("%.1f", greg.cp) + ", AL x100 AB " +
         fmt("%.1f", 100 * ab.al) + " GREG " + fmt("%.1f", 100 * greg.al));
  c.check(ab.cp >= 91.5 && ab.cp <= 97.5, "CP(AB) in [91.5, 97.5]");
  c.check(greg.cp <= ab.cp - 2.0, "CP(GREG) <= CP(AB) - 2");
  c.check(ab.al > greg.al, "AL(AB) > AL(GREG)");
}

void criterion_logistic_coverage(Criterion& c) {
  ScenarioConfig cfg;
  cfg.kind = ScenarioKind::Logistic;
  cfg.N = 10000;
  cfg.p_star = 50;
  cfg.p = 50;
  cfg.n = 300;
  cfg.reps = 200;
  cfg.mcmc = McmcConfig{2000, 200, 0, 1};
  cfg.methods = {Method::Greg, Method::Ab};
  cfg.seed = 1;
  const MetricsTable t = run_study(cfg);
  const MethodMetrics& ab = t.at(Method::Ab);
  const MethodMetrics& greg = t.at(Method::Greg);
  c.note("CP AB " + fmt("%.1f", ab.cp) + " GREG " + fmt("%.1f", greg.cp) + ", completed " +
         std::to_string(ab.completed) + "/" + std::to_string(t.reps));
  c.check(ab.completed > 0 && greg.completed > 0, "replications completed");
  c.check(ab.cp - greg.cp >= 4.0, "CP(AB) - CP(GREG) >= 4");
}

void criterion_asymptotic_normality(Criterion& c) {
  ScenarioConfig cfg;
  cfg.N = 20000;
  cfg.p_star = 5;
  cfg.p = 5;
  const FinitePopulation pop = gen_population_linear(cfg, 3);
  const Sample s = draw_sample(pop, DesignSpec::srs(2000), 4);
  const AuxTotals aux = AuxTotals::from_population(pop);
  const RegressionFit fit = fit_wls(s);
  const double center = greg_mean(s, aux, fit.beta1);
  const double sd = std::sqrt(variance_e(s, fit.beta1));
  const PosteriorDraws d = run_posterior(s, aux, FlatPrior{}, McmcConfig{2000, 0, 5, 1});
  const std::vector<double> v(d.ybar.data(), d.ybar.data() + d.ybar.size());
  const double ks = oracle::ks_distance_normal(v, center, sd);
  const double shift = std::abs(posterior_mean(d) - center) / sd;
  c.note("KS " + fmt("%.4f", ks) + ", |mean shift|/sd " + fmt("%.3f", shift));
  c.check(ks <= 0.05, "KS <= 0.05");
  c.check(shift <= 0.5, "posterior mean within 0.5 sd");
}

struct MomentStats {
  double mean = 0.0, var = 0.0, mean_se = 0.0, var_se = 0.0;
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

void check_moments(Criterion& c, const std::string& what, const std::vector<double>& v, double mean, double var) {
  const MomentStats s = moments(v);
  c.check(std::abs(s.mean - mean) <= 3.0 * s.mean_se, what + " mean");
  c.check(std::abs(s.var - var) <= 3.0 * s.var_se, what + " variance");
}

CoefficientLikelihood scalar_likelihood(double estimate, double variance) {
  CoefficientLikelihood lik;
  lik.estimate = VectorXd::Constant(1, estimate);
  lik.covariance = MatrixXd::Constant(1, 1, variance);
  lik.shrink = {true};
  return lik;
}

void criterion_gibbs(Criterion& c) {
  const YbarDraw zero = [](const VectorXd&, Rng&) { return 0.0; };

  // Laplace, fixed global scale.
  {
    const double beta_hat = 0.8, v = 0.3, lambda = 2.0;
    const oracle::Moments ref = oracle::laplace_posterior_quadrature(beta_hat, v, lambda);
    LaplacePrior prior;
    prior.fixed_lambda2 = lambda * lambda;
    const McmcConfig cfg{200000, 2000, 11, 1};
    const PosteriorDraws d = run_chain(scalar_likelihood(beta_hat, v), prior, cfg, zero);
    const double mean = d.beta.col(0).mean();
    const double sd = std::sqrt((d.beta.col(0).array() - mean).square().sum() / (cfg.n_draws - 1));
    c.note("Laplace mean err " + fmt("%.4f", std::abs(mean - ref.mean)) + " sd rel err " +
           fmt("%.4f", std::abs(sd / ref.sd - 1.0)));
    c.check(std::abs(mean - ref.mean) <= 0.01, "Laplace mean");
    c.check(std::abs(sd / ref.sd - 1.0) <= 0.02, "Laplace sd");
  }
  // Horseshoe.
  {
    const double beta_hat = 1.0, v = 0.5;
    const double ref = oracle::horseshoe_posterior_mean_quadrature(beta_hat, v);
    const PosteriorDraws d =
        run_chain(scalar_likelihood(beta_hat, v), HorseshoePrior{}, McmcConfig{400000, 5000, 12, 1}, zero);
    const double err = std::abs(d.beta.col(0).mean() - ref);
    c.note("horseshoe mean err " + fmt("%.4f", err));
    c.check(err <= 0.02, "horseshoe mean");
  }
  // Full conditionals over 1e5 draws each.
  constexpr int kDraws = 100000;
  std::vector<double> v(kDraws);
  {
    CoefficientLikelihood lik;
    lik.estimate = Eigen::Vector2d(2.0, -1.0);
    lik.covariance.resize(2, 2);
    lik.covariance << 0.25, 0.05, 0.05, 0.16;
    lik.shrink = {true, false};
    const ShrinkageSampler sampler(lik);
    const VectorXd prior_var = Eigen::Vector2d(0.5, 1.0);
    const MatrixXd prec = lik.covariance.inverse();
    MatrixXd a = prec;
    a(0, 0) += 1.0 / 0.5;
    const MatrixXd cov = a.inverse();
    const VectorXd mean = cov * prec * lik.estimate;
    Rng rng = make_rng(3);
    std::vector<double> b0(kDraws), b1(kDraws);
    for (int k = 0; k < kDraws; ++k) {
      const VectorXd b = sampler.draw_conditional_beta(prior_var, rng);
      b0[k] = b[0];
      b1[k] = b[1];
    }
    check_moments(c, "coefficient[0]", b0, mean[0], cov(0, 0));
    check_moments(c, "coefficient[1]", b1, mean[1], cov(1, 1));
  }
  {
    LaplacePrior prior;
    prior.a = 1.0;
    prior.b = 2.0;
    Rng rng = make_rng(4);
    for (auto& x : v) x = conditional::laplace_lambda2(Eigen::Vector2d(0.5, 1.5), prior, rng);
    check_moments(c, "Laplace lambda^2", v, 1.0, 1.0 / 3.0);
  }
  {
    const double beta = 0.5, lambda2 = 2.0, mu = std::sqrt(lambda2) / std::abs(beta);
    Rng rng = make_rng(5);
    for (auto& x : v) x = 1.0 / conditional::laplace_tau2(beta, lambda2, rng);
    check_moments(c, "Laplace 1/tau^2", v, mu, mu * mu * mu / lambda2);
  }
  {
    Rng rng = make_rng(6);
    const double rate = 1.0 / 2.0 + 1.0 / (2.0 * 0.5);
    for (auto& x : v) x = 1.0 / conditional::horseshoe_u2(1.0, 0.5, 2.0, rng);
    check_moments(c, "horseshoe 1/u^2", v, 1.0 / rate, 1.0 / (rate * rate));
    for (auto& x : v) x = 1.0 / conditional::horseshoe_xi(0.25, rng);
    check_moments(c, "horseshoe 1/xi", v, 1.0 / 5.0, 1.0 / 25.0);
    const VectorXd beta = Eigen::Vector3d(0.5, -1.0, 2.0);
    const VectorXd u2 = Eigen::Vector3d(1.0, 2.0, 4.0);
    const double grate = 1.0 / 0.5 + 0.5 * (0.25 / 1.0 + 1.0 / 2.0 + 4.0 / 4.0);
    for (auto& x : v) x = 1.0 / conditional::horseshoe_lambda2(beta, u2, 0.5, rng);
    check_moments(c, "horseshoe 1/lambda^2", v, 2.0 / grate, 2.0 / (grate * grate));
    for (auto& x : v) x = 1.0 / conditional::horseshoe_gamma(0.5, rng);
    check_moments(c, "horseshoe 1/gamma", v, 1.0 / 3.0, 1.0 / 9.0);
  }
}

void criterion_solvers(Criterion& c) {
  std::mt19937_64 gen(4);
  const Index n = 200, p = 8;
  MatrixXd x = oracle::random_matrix(n, p, gen);
  x.col(0) = x.col(0) * 3.0 + VectorXd::Constant(n, 1.0);
  VectorXd beta = VectorXd::Zero(p);
  beta[0] = 1.0;
  beta[2] = -0.7;
  const VectorXd y = (x * beta).array() + 0.5 + oracle::random_vector(n, gen).array();
  std::uniform_real_distribution<double> u(0.02, 0.2);
  VectorXd w(n);
  for (Index i = 0; i < n; ++i) w[i] = 1.0 / u(gen);

  double worst_kkt = 0.0, worst_soft = 0.0, worst_ridge = 0.0;
  for (bool standardize : {true, false}) {
    PenalizedOptions opts;
    opts.standardize = standardize;
    const double lmax = lambda_max(x, y, w, PenaltyFamily::lasso(), standardize);
    const double ws = w.sum();
    VectorXd s_j = VectorXd::Ones(p);
    if (standardize) {
      const VectorXd xm = x.transpose() * w / ws;
      for (Index j = 0; j < p; ++j) s_j[j] = std::sqrt(w.dot((x.col(j).array() - xm[j]).square().matrix()) / ws);
    }
    for (double frac : {0.5, 0.1, 0.01}) {
      const PenalizedFit fit = fit_penalized(x, y, w, LassoPenalty{frac * lmax}, opts);
      const double viol = oracle::kkt_violation(x, y, w, fit.beta0, fit.beta1, frac * lmax * s_j, VectorXd::Zero(p));
      worst_kkt = std::max({worst_kkt, viol, fit.kkt_residual});
    }
    const MatrixXd x1 = x.leftCols(1);
    const double top1 = lambda_max(x1, y, w, PenaltyFamily::lasso());
    for (double lambda : {0.0, 0.3 * top1, 0.9 * top1, 1.5 * top1}) {
      const PenalizedFit fit = fit_penalized(x1, y, w, LassoPenalty{lambda}, opts);
      const VectorXd ref = oracle::lasso_p1_closed_form(x1.col(0), y, w, lambda, standardize);
      worst_soft = std::max({worst_soft, std::abs(fit.beta1[0] - ref[1]), std::abs(fit.beta0 - ref[0])});
    }
    for (double lambda : {1.0, 100.0, 1e4}) {
      const PenalizedFit fit = fit_penalized(x, y, w, RidgePenalty{lambda}, opts);
      const VectorXd ref = oracle::ridge_closed_form(x, y, w, lambda, standardize);
      worst_ridge = std::max(worst_ridge, (fit.coefficients() - ref).cwiseAbs().maxCoeff());
    }
  }
  c.note("lasso KKT " + fmt("%.1e", worst_kkt) + ", soft threshold " + fmt("%.1e", worst_soft) + ", ridge " +
         fmt("%.1e", worst_ridge));
  c.check(worst_kkt <= 1e-8, "lasso KKT <= 1e-8");
  c.check(worst_soft <= 1e-10, "p = 1 soft threshold to 1e-10");
  c.check(worst_ridge <= 1e-8, "ridge closed form to 1e-8");

  // Weighted logistic: Newton against textbook IRLS, and the analytic Jacobian.
  double worst_irls = 0.0, worst_jac = 0.0;
  for (std::uint64_t seed : {2, 3, 4}) {
    std::mt19937_64 g(seed);
    const Index N = 4000, q = 4;
    const MatrixXd px = oracle::random_matrix(N, q, g);
    const VectorXd pb = Eigen::Vector4d(1.0, -0.5, 0.5, 0.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    VectorXd py(N), z(N);
    for (Index i = 0; i < N; ++i) {
      py[i] = unif(g) < 1.0 / (1.0 + std::exp(1.0 - px.row(i).dot(pb))) ? 1.0 : 0.0;
      z[i] = 1.0 + std::abs(px(i, 0));
    }
    const Sample s = draw_sample(FinitePopulation(py, px, {}, z), DesignSpec::pps(400), seed + 7);
    const LogisticModel model;
    const GlmFit fit = solve_ee(s, model);
    const VectorXd ref = oracle::logistic_irls(s.x(), s.y(), s.weights());
    worst_irls = std::max(worst_irls, (fit.beta - ref).cwiseAbs().maxCoeff());

    const VectorXd at = Eigen::Matrix<double, 5, 1>(-0.8, 0.7, -0.3, 0.4, 0.1);
    const MatrixXd jac = estimating_jacobian(s, model, at);
    const double h = 1e-6;
    for (Index k = 0; k < at.size(); ++k) {
      VectorXd up = at, down = at;
      up[k] += h;
      down[k] -= h;
      const VectorXd fd = (estimating_function(s, model, up) - estimating_function(s, model, down)) / (2 * h);
      for (Index r = 0; r < at.size(); ++r) {
        const double scale = std::max(std::abs(fd[r]), 1e-3 * jac.cwiseAbs().maxCoeff());
        worst_jac = std::max(worst_jac, std::abs(jac(r, k) - fd[r]) / scale);
      }
    }
  }
  c.note("Newton vs IRLS " + fmt("%.1e", worst_irls) + ", Jacobian rel " + fmt("%.1e", worst_jac));
  c.check(worst_irls <= 1e-6, "logistic Newton vs IRLS to 1e-6");
  c.check(worst_jac <= 1e-5, "finite-difference Jacobian at 1e-5");
}

void criterion_variance_enumeration(Criterion& c) {
  double worst = 0.0;
  for (Index N : {5, 6}) {
    for (Index n : {2, 3}) {
      std::mt19937_64 gen(static_cast<std::uint64_t>(10 * N + n));
      const VectorXd y = oracle::random_vector(N, gen).array() * 3.0 + 1.0;
      const double Nd = static_cast<double>(N), nd = static_cast<double>(n);
      const double S2 = (y.array() - y.mean()).square().sum() / (Nd - 1.0);
      const double true_var = (1.0 - nd / Nd) * S2 / nd;
      const auto subsets = oracle::all_subsets(N, n);
      double mean_est = 0.0, second = 0.0, mean_var = 0.0;
      for (const auto& idx : subsets) {
        VectorXd ys(n);
        for (Index k = 0; k < n; ++k) ys[k] = y[idx[k]];
        const Sample s(idx, ys, MatrixXd::Zero(n, 0), VectorXd::Constant(n, nd / Nd), PairwisePolicy::ExactSrs, Nd);
        const double v = ht_variance(s);
        const VectorXd expanded = (ys.array() - ys.mean()) / (nd / Nd);
        worst = std::max({worst, std::abs(v - oracle::srs_mean_variance(ys, Nd)),
                          std::abs(v - oracle::naive_quadratic_form(PairwisePolicy::ExactSrs, s.pi(), expanded, Nd) /
                                           (Nd * Nd))});
        const double est = ht_mean(s);
        mean_est += est;
        second += est * est;
        mean_var += v;
      }
      const auto count = static_cast<double>(subsets.size());
      mean_est /= count;
      mean_var /= count;
      worst = std::max({worst, std::abs(mean_est - y.mean()), std::abs(second / count - mean_est * mean_est - true_var),
                        std::abs(mean_var - true_var)});
    }
  }
  c.note("max abs error " + fmt("%.1e", worst));
  c.check(worst <= 1e-12, "exhaustive enumeration to 1e-12");
}

void criterion_determinism(Criterion& c) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "abgreg_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const json doc = {{"command", "simulate"},
                    {"seed", 8},
                    {"scenario", {{"N", 2000}, {"p_star", 20}, {"p", 20}, {"n", 120}, {"reps", 4}, {"threads", 3}}},
                    {"mcmc", {{"n_draws", 300}, {"burn_in", 50}}},
                    {"cv_folds", 5},
                    {"output", {{"dir", (dir / "first").string()}}}};
  const json first = cli::dispatch(cli::parse_config(doc, dir));
  json embedded = first["config"];
  embedded["output"]["dir"] = (dir / "second").string();
  const json second = cli::dispatch(cli::parse_config(embedded, dir));
  c.check(first["results"] == second["results"], "results identical");
  c.check(first["seed"] == second["seed"], "seed identical");
  json a = first["config"], b = second["config"];
  a.erase("output");
  b.erase("output");
  c.check(a == b, "effective config identical");
  c.note(std::to_string(first["results"]["methods"].size()) + " methods x 4 reps");
}

}  // namespace

int main() {
  bool all = true;
  try {
    const MetricsTable linear = run_study(linear_study());
    {
      Criterion c("1 linear RMSE ordering");
      criterion_linear_ordering(c, linear);
      all &= c.report();
    }
    {
      Criterion c("2 linear coverage");
      criterion_linear_coverage(c, linear);
      all &= c.report();
    }
    {
      Criterion c("3 logistic coverage");
      criterion_logistic_coverage(c);
      all &= c.report();
    }
    {
      Criterion c("4 asymptotic normality");
      criterion_asymptotic_normality(c);
      all &= c.report();
    }
    {
      Criterion c("5 Gibbs oracles");
      criterion_gibbs(c);
      all &= c.report();
    }
    {
      Criterion c("6 solver oracles");
      criterion_solvers(c);
      all &= c.report();
    }
    {
      Criterion c("7 variance enumeration");
      criterion_variance_enumeration(c);
      all &= c.report();
    }
    {
      Criterion c("8 determinism");
      criterion_determinism(c);
      all &= c.report();
    }
  } catch (const std::exception& e) {
    std::printf("FAIL uncaught error: %s\n", e.what());
    return 1;
  }
  return all ? 0 : 1;
}
