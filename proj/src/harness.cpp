#include "abgreg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <thread>

#include "abgreg/error.hpp"
#include "abgreg/glm.hpp"
#include "abgreg/regfit.hpp"

namespace abgreg {

namespace {

struct MethodName {
  Method method;
  const char* tag;
};

constexpr MethodName kMethodNames[] = {
    {Method::Greg, "GREG"},       {Method::GregLasso, "GREG-L"}, {Method::GregRidge, "GREG-R"},
    {Method::GregSelect, "GREG-V"}, {Method::Ab, "AB"},          {Method::AbLaplace, "ABL"},
    {Method::AbHorseshoe, "ABH"}, {Method::Ht, "HT"},
};

constexpr std::uint64_t kPopulationStream = 0x504F50;
constexpr std::uint64_t kSizeMeasureStream = 0x5A5A;
constexpr std::uint64_t kReplicationStream = 0x5245500000ULL;
constexpr std::uint64_t kSampleStream = 0x53;
constexpr std::uint64_t kCvStream = 0xC5;

}  // namespace

std::string to_string(Method m) {
  for (const auto& e : kMethodNames) {
    if (e.method == m) return e.tag;
  }
  return "?";
}

Method method_from_string(const std::string& tag) {
  for (const auto& e : kMethodNames) {
    if (tag == e.tag) return e.method;
  }
  config_error("unknown method tag '" + tag + "'");
}

std::string to_string(ScenarioKind k) { return k == ScenarioKind::Linear ? "linear" : "logistic"; }
std::string to_string(DesignKind d) { return d == DesignKind::Srs ? "srs" : "pps"; }

ScenarioKind scenario_kind_from_string(const std::string& s) {
  if (s == "linear") return ScenarioKind::Linear;
  if (s == "logistic") return ScenarioKind::Logistic;
  config_error("scenario kind must be 'linear' or 'logistic', got '" + s + "'");
}

DesignKind design_kind_from_string(const std::string& s) {
  if (s == "srs" || s == "A") return DesignKind::Srs;
  if (s == "pps" || s == "B") return DesignKind::Pps;
  config_error("design must be 'srs' (A) or 'pps' (B), got '" + s + "'");
}

bool is_bayesian(Method m) {
  return m == Method::Ab || m == Method::AbLaplace || m == Method::AbHorseshoe;
}

double ScenarioConfig::effective_beta0() const {
  if (beta0) return *beta0;
  return kind == ScenarioKind::Linear ? 0.0 : -1.0;
}

double ScenarioConfig::effective_size_noise_rate() const {
  if (size_noise_rate) return *size_noise_rate;
  return kind == ScenarioKind::Linear ? 2.0 : 3.0;
}

void ScenarioConfig::validate() const {
  if (N < 2) config_error("scenario N must be at least 2");
  if (p_star < 1) config_error("scenario p_star must be positive");
  if (p < 0 || p > p_star) config_error("scenario p must lie in [0, p_star]");
  if (n < 2 || n > N) config_error("scenario n must lie in [2, N]");
  if (!(rho > -1.0 && rho < 1.0)) config_error("scenario rho must lie in (-1, 1)");
  if (reps < 1) config_error("scenario reps must be positive");
  if (methods.empty()) config_error("scenario methods must be nonempty");
  if (!(noise_var >= 0.0)) config_error("scenario noise_var must be nonnegative");
  if (!std::isfinite(signal_scale)) config_error("scenario signal_scale must be finite");
  if (!(effective_size_noise_rate() > 0.0)) config_error("size-measure noise rate must be positive");
  if (cv_folds < 2) config_error("cv_folds must be at least 2");
  if (!(level > 0.0 && level < 1.0)) config_error("level must lie in (0, 1)");
  if (threads < 0) config_error("threads must be nonnegative");
  if (kind == ScenarioKind::Logistic &&
      std::find(methods.begin(), methods.end(), Method::GregSelect) != methods.end()) {
    config_error("GREG-V is defined for the linear working model only");
  }
  mcmc.validate();
}

std::vector<std::pair<Index, double>> generating_slopes() {
  return {{0, 1.0}, {3, -0.5}, {6, 1.0}, {9, -0.5}};
}

MatrixXd gen_covariates(Index N, Index p_star, double rho, Rng& rng) {
  MatrixXd cov(p_star, p_star);
  for (Index i = 0; i < p_star; ++i) {
    for (Index j = 0; j < p_star; ++j) cov(i, j) = 2.0 * std::pow(rho, static_cast<double>(std::abs(i - j)));
  }
  const MatrixXd chol = Eigen::LLT<MatrixXd>(cov).matrixL();
  MatrixXd x(N, p_star);
  VectorXd z(p_star);
  for (Index i = 0; i < N; ++i) {
    for (Index k = 0; k < p_star; ++k) z[k] = draw_normal(rng);
    x.row(i) = (chol * z).transpose();
  }
  x.array() += 1.0;
  return x;
}

namespace {

VectorXd linear_index(const MatrixXd& x, double beta0, double scale) {
  VectorXd eta = VectorXd::Constant(x.rows(), beta0);
  for (const auto& [col, value] : generating_slopes()) {
    if (col < x.cols() && scale != 0.0) eta += scale * value * x.col(col);
  }
  return eta;
}

}  // namespace

FinitePopulation gen_population_linear(const ScenarioConfig& cfg, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  MatrixXd x = gen_covariates(cfg.N, cfg.p_star, cfg.rho, rng);
  VectorXd y = linear_index(x, cfg.effective_beta0(), cfg.signal_scale);
  const double sd = std::sqrt(cfg.noise_var);
  for (Index i = 0; i < y.size(); ++i) y[i] += sd * draw_normal(rng);
  return FinitePopulation(std::move(y), std::move(x));
}

FinitePopulation gen_population_logistic(const ScenarioConfig& cfg, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  MatrixXd x = gen_covariates(cfg.N, cfg.p_star, cfg.rho, rng);
  const VectorXd eta = linear_index(x, cfg.effective_beta0(), cfg.signal_scale);
  VectorXd y(eta.size());
  for (Index i = 0; i < y.size(); ++i) {
    const double prob = 1.0 / (1.0 + std::exp(-eta[i]));
    y[i] = draw_uniform(rng) < prob ? 1.0 : 0.0;
  }
  return FinitePopulation(std::move(y), std::move(x));
}

FinitePopulation gen_population(const ScenarioConfig& cfg, std::uint64_t seed) {
  return cfg.kind == ScenarioKind::Linear ? gen_population_linear(cfg, seed)
                                          : gen_population_logistic(cfg, seed);
}

VectorXd pps_size_measure(const FinitePopulation& pop, const ScenarioConfig& cfg, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  const double rate = cfg.effective_size_noise_rate();
  VectorXd z(pop.size());
  for (Index i = 0; i < z.size(); ++i) {
    const double e = draw_exponential(rng, rate);
    const double yi = pop.y()[i];
    z[i] = cfg.kind == ScenarioKind::Linear ? std::max(std::log(1.0 + std::abs(yi + e)), 1.0)
                                            : std::max(std::log(1.0 + 0.5 * yi + e), 0.5);
  }
  return z;
}

double normal_critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) config_error("level must lie in (0, 1)");
  const double target = 0.5 * (1.0 - level);  // upper tail
  // Newton on the upper-tail probability 0.5 erfc(z / sqrt 2).
  double z = 1.0;
  for (int it = 0; it < 100; ++it) {
    const double tail = 0.5 * std::erfc(z / std::sqrt(2.0));
    const double density = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    const double next = z + (tail - target) / density;
    if (std::abs(next - z) < 1e-15 * std::max(1.0, std::abs(z))) return next;
    z = next;
  }
  return z;
}

LaplacePrior laplace_prior_from_lasso(double lambda, double n_hat) {
  if (!(n_hat > 0.0)) data_error("estimated population size must be positive");
  LaplacePrior prior;
  const double per_unit = lambda / (2.0 * n_hat);
  // A zero lambda would make the Gamma shape degenerate.
  prior.a = std::max(per_unit * per_unit, 1e-12);
  prior.b = 1.0;
  return prior;
}

namespace {

MethodResult frequentist(double point, double variance, double level) {
  if (!(variance >= 0.0) || !std::isfinite(variance)) numerical_error("invalid variance estimate");
  const double half = normal_critical_value(level) * std::sqrt(variance);
  return {point, point - half, point + half, std::nullopt};
}

MethodResult bayesian(const PosteriorDraws& draws, double level) {
  const PosteriorSummary s = summarize(draws, level);
  return {s.point, s.lower, s.upper, std::nullopt};
}

double cv_lambda(const EstimationContext& ctx, const PenaltyFamily& family) {
  const Sample& sample = *ctx.sample;
  const std::uint64_t seed = derive_seed(ctx.seed, kCvStream);
  if (ctx.kind == ScenarioKind::Linear) {
    return cv_select_lambda(sample, family, ctx.cv_folds, lambda_grid(sample, family), seed).lambda;
  }
  const LogisticModel model;
  return cv_select_lambda_glm(sample, model, family, ctx.cv_folds, lambda_grid_glm(sample, model, family), seed)
      .lambda;
}

MethodResult penalized_greg(const EstimationContext& ctx, const PenaltyFamily& family,
                            std::optional<double> known_lambda) {
  const Sample& sample = *ctx.sample;
  const double lambda = known_lambda ? *known_lambda : cv_lambda(ctx, family);
  MethodResult r;
  if (ctx.kind == ScenarioKind::Linear) {
    const PenalizedFit fit = fit_penalized(sample, family.at(lambda));
    r = frequentist(greg_mean(sample, *ctx.aux, fit.beta1), variance_e(sample, fit.beta1), ctx.level);
  } else {
    const LogisticModel model;
    const PenalizedGlmFit fit = fit_penalized_glm(sample, model, family.at(lambda));
    r = frequentist(model_assisted_mean(*ctx.aux->pop_x, sample, model, fit.beta),
                    variance_e_m(sample, model, fit.beta), ctx.level);
  }
  r.lambda = lambda;
  return r;
}

PosteriorDraws posterior(const EstimationContext& ctx, const PriorSpec& prior) {
  if (ctx.kind == ScenarioKind::Linear) return run_posterior(*ctx.sample, *ctx.aux, prior, ctx.mcmc);
  return run_posterior_glm(*ctx.sample, *ctx.aux->pop_x, LogisticModel(), prior, ctx.mcmc);
}

}  // namespace

MethodResult estimate_method(Method method, const EstimationContext& ctx) {
  if (ctx.sample == nullptr || ctx.aux == nullptr) config_error("estimation context is incomplete");
  const Sample& sample = *ctx.sample;
  if (ctx.kind == ScenarioKind::Logistic && method != Method::Ht && !ctx.aux->pop_x) {
    data_error("the logistic working model needs unit-level population covariates");
  }
  switch (method) {
    case Method::Ht:
      return frequentist(ht_mean(sample), ht_variance(sample), ctx.level);
    case Method::Greg: {
      if (ctx.kind == ScenarioKind::Linear) {
        const RegressionFit fit = fit_wls(sample);
        return frequentist(greg_mean(sample, *ctx.aux, fit.beta1), variance_e(sample, fit.beta1), ctx.level);
      }
      const LogisticModel model;
      const GlmFit fit = solve_ee(sample, model);
      if (!fit.converged) numerical_error("estimating equations did not converge");
      return frequentist(model_assisted_mean(*ctx.aux->pop_x, sample, model, fit.beta),
                         variance_e_m(sample, model, fit.beta), ctx.level);
    }
    case Method::GregLasso:
      return penalized_greg(ctx, PenaltyFamily::lasso(), ctx.lasso_lambda);
    case Method::GregRidge:
      return penalized_greg(ctx, PenaltyFamily::ridge(), std::nullopt);
    case Method::GregSelect: {
      if (ctx.kind != ScenarioKind::Linear) config_error("GREG-V is defined for the linear working model only");
      const ForwardSelection sel = forward_select(sample);
      const VectorXd beta1 = sel.full_beta1(sample.num_aux());
      return frequentist(greg_mean(sample, *ctx.aux, beta1), variance_e(sample, beta1), ctx.level);
    }
    case Method::Ab:
      return bayesian(posterior(ctx, FlatPrior{}), ctx.level);
    case Method::AbLaplace: {
      const double lambda = ctx.lasso_lambda ? *ctx.lasso_lambda : cv_lambda(ctx, PenaltyFamily::lasso());
      MethodResult r = bayesian(posterior(ctx, laplace_prior_from_lasso(lambda, sample.weights().sum())), ctx.level);
      r.lambda = lambda;
      return r;
    }
    case Method::AbHorseshoe:
      return bayesian(posterior(ctx, HorseshoePrior{}), ctx.level);
  }
  config_error("unhandled method");
}

const MethodMetrics& MetricsTable::at(Method m) const {
  for (const auto& mm : methods) {
    if (mm.method == m) return mm;
  }
  config_error("method " + to_string(m) + " is not part of this study");
}

std::uint64_t replication_seed(std::uint64_t seed, int rep) {
  return derive_seed(seed, kReplicationStream + static_cast<std::uint64_t>(rep));
}

void finalize_metrics(MethodMetrics& m, double true_mean) {
  const auto k = m.estimates.size();
  m.completed = static_cast<int>(k);
  if (k == 0) {
    m.rmse = m.bias = m.cp = m.al = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  double se = 0.0, bias = 0.0, cover = 0.0, len = 0.0;
  for (std::size_t r = 0; r < k; ++r) {
    const double err = m.estimates[r] - true_mean;
    se += err * err;
    bias += err;
    cover += (m.lower[r] <= true_mean && true_mean <= m.upper[r]) ? 1.0 : 0.0;
    len += m.upper[r] - m.lower[r];
  }
  const double kd = static_cast<double>(k);
  m.rmse = std::sqrt(se / kd);
  m.bias = bias / kd;
  m.cp = 100.0 * cover / kd;
  m.al = len / kd;
}

namespace {

struct RepOutcome {
  bool ok = false;
  MethodResult result;
  std::string error;
};

std::vector<RepOutcome> run_replication(const ScenarioConfig& cfg, const FinitePopulation& pop,
                                        const AuxTotals& aux, const DesignSpec& design, int rep) {
  const std::uint64_t rseed = replication_seed(cfg.seed, rep);
  std::vector<RepOutcome> out(cfg.methods.size());
  std::optional<Sample> sample;
  try {
    sample.emplace(draw_sample(pop, design, derive_seed(rseed, kSampleStream)));
  } catch (const std::exception& e) {
    for (auto& o : out) o.error = e.what();
    return out;
  }

  EstimationContext ctx;
  ctx.sample = &*sample;
  ctx.aux = &aux;
  ctx.kind = cfg.kind;
  ctx.cv_folds = cfg.cv_folds;
  ctx.level = cfg.level;
  ctx.seed = rseed;

  // GREG-L goes first so its lambda can feed the Laplace prior.
  std::vector<std::size_t> order(cfg.methods.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_partition(order.begin(), order.end(),
                        [&](std::size_t k) { return cfg.methods[k] == Method::GregLasso; });

  for (std::size_t k : order) {
    const Method m = cfg.methods[k];
    ctx.mcmc = cfg.mcmc;
    ctx.mcmc.seed = derive_seed(rseed, 0x100 + static_cast<std::uint64_t>(m));
    try {
      out[k].result = estimate_method(m, ctx);
      out[k].ok = true;
      if (m == Method::GregLasso) ctx.lasso_lambda = out[k].result.lambda;
    } catch (const std::exception& e) {
      out[k].error = e.what();
    }
  }
  return out;
}

}  // namespace

MetricsTable run_study(const ScenarioConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();

  FinitePopulation pop = gen_population(cfg, derive_seed(cfg.seed, kPopulationStream));
  if (cfg.design == DesignKind::Pps) {
    pop = pop.with_size_measure(pps_size_measure(pop, cfg, derive_seed(cfg.seed, kSizeMeasureStream)));
  }
  pop = pop.leading_columns(cfg.p);
  const AuxTotals aux = AuxTotals::from_population(pop, cfg.kind == ScenarioKind::Logistic);
  const DesignSpec design = cfg.design == DesignKind::Srs ? DesignSpec::srs(cfg.n) : DesignSpec::pps(cfg.n);

  std::vector<std::vector<RepOutcome>> outcomes(static_cast<std::size_t>(cfg.reps));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int rep = next++; rep < cfg.reps; rep = next++) {
      outcomes[static_cast<std::size_t>(rep)] = run_replication(cfg, pop, aux, design, rep);
    }
  };
  unsigned hw = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : std::thread::hardware_concurrency();
  const unsigned n_threads = std::clamp(hw, 1u, static_cast<unsigned>(cfg.reps));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  MetricsTable table;
  table.true_mean = pop.mean_y();
  table.reps = cfg.reps;
  for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
    MethodMetrics m;
    m.method = cfg.methods[k];
    for (const auto& rep : outcomes) {
      const RepOutcome& o = rep[k];
      if (o.ok) {
        m.estimates.push_back(o.result.point);
        m.lower.push_back(o.result.lower);
        m.upper.push_back(o.result.upper);
      } else {
        if (m.failures == 0) m.first_failure = o.error;
        ++m.failures;
      }
    }
    finalize_metrics(m, table.true_mean);
    table.methods.push_back(std::move(m));
  }
  table.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return table;
}

}  // namespace abgreg
