#ifndef ABGREG_HARNESS_HPP_
#define ABGREG_HARNESS_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "abgreg/bayes.hpp"
#include "abgreg/survey.hpp"

namespace abgreg {

enum class ScenarioKind { Linear, Logistic };
enum class DesignKind { Srs, Pps };

// GREG: unpenalized; GREG-L / GREG-R: cross-validated lasso / ridge plugged
// into the GREG form; GREG-V: forward selection; AB / ABL / ABH: two-step
// posterior under flat / Laplace / horseshoe priors; HT: Horvitz-Thompson.
enum class Method { Greg, GregLasso, GregRidge, GregSelect, Ab, AbLaplace, AbHorseshoe, Ht };

std::string to_string(Method m);
Method method_from_string(const std::string& tag);
std::string to_string(ScenarioKind k);
std::string to_string(DesignKind d);
ScenarioKind scenario_kind_from_string(const std::string& s);
DesignKind design_kind_from_string(const std::string& s);
bool is_bayesian(Method m);

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::Linear;
  Index N = 10000;
  Index p_star = 50;
  Index p = 50;
  Index n = 300;
  double rho = 0.2;
  DesignKind design = DesignKind::Srs;
  int reps = 200;
  std::vector<Method> methods{Method::Greg, Method::GregLasso, Method::GregRidge, Method::GregSelect,
                              Method::Ab,   Method::AbLaplace, Method::AbHorseshoe, Method::Ht};
  McmcConfig mcmc;
  std::uint64_t seed = 1;

  // Unset means the scenario default: 0 (linear) or -1 (logistic).
  std::optional<double> beta0;
  // Variance of the linear-model noise; 4 corresponds to a noise sd of 2.
  double noise_var = 4.0;
  // Multiplies every generating slope; 0 leaves only the intercept.
  double signal_scale = 1.0;
  // Rate of the exponential noise in the PPS size measure; unset means 2
  // (linear) or 3 (logistic).
  std::optional<double> size_noise_rate;
  int cv_folds = 10;
  double level = 0.95;
  int threads = 0;  // 0: hardware concurrency

  double effective_beta0() const;
  double effective_size_noise_rate() const;
  void validate() const;
};

// Nonzero slopes (0-based column, value) of the generating model.
std::vector<std::pair<Index, double>> generating_slopes();

// Rows x ~ N(1, 2 R(rho)), R_ij = rho^|i-j|, drawn through the Cholesky factor.
MatrixXd gen_covariates(Index N, Index p_star, double rho, Rng& rng);
FinitePopulation gen_population_linear(const ScenarioConfig& cfg, std::uint64_t seed);
FinitePopulation gen_population_logistic(const ScenarioConfig& cfg, std::uint64_t seed);
FinitePopulation gen_population(const ScenarioConfig& cfg, std::uint64_t seed);

// Linear:   max(log(1 + |y + e|), 1),   e ~ Exp(rate)
// Logistic: max(log(1 + 0.5 y + e), 0.5), e ~ Exp(rate)
VectorXd pps_size_measure(const FinitePopulation& pop, const ScenarioConfig& cfg, std::uint64_t seed);

struct EstimationContext {
  const Sample* sample = nullptr;
  const AuxTotals* aux = nullptr;
  ScenarioKind kind = ScenarioKind::Linear;
  McmcConfig mcmc;
  int cv_folds = 10;
  double level = 0.95;
  std::uint64_t seed = 1;
  // Cross-validated lasso lambda already computed for this sample, reused by
  // the Laplace prior hyperparameters.
  std::optional<double> lasso_lambda;
};

struct MethodResult {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  // Tuning parameter chosen by cross-validation, when the method uses one.
  std::optional<double> lambda;
};

// Frequentist methods report point -+ z sqrt(variance); Bayesian methods report
// the posterior mean and equal-tailed interval.
MethodResult estimate_method(Method method, const EstimationContext& ctx);

// Two-sided standard normal critical value for a central interval.
double normal_critical_value(double level);

// Gamma(a, 1) hyperprior for lambda^2 from a cross-validated lasso lambda of
// the weighted objective: a = (lambda / (2 N_hat))^2.
LaplacePrior laplace_prior_from_lasso(double lambda, double n_hat);

struct MethodMetrics {
  Method method = Method::Greg;
  double rmse = 0.0;
  double bias = 0.0;
  double cp = 0.0;  // percent
  double al = 0.0;
  int completed = 0;
  int failures = 0;
  std::string first_failure;
  // Per successful replication, in replication order.
  std::vector<double> estimates;
  std::vector<double> lower;
  std::vector<double> upper;
};

struct MetricsTable {
  double true_mean = 0.0;
  int reps = 0;
  double runtime_seconds = 0.0;
  std::vector<MethodMetrics> methods;

  const MethodMetrics& at(Method m) const;
};

std::uint64_t replication_seed(std::uint64_t seed, int rep);

// One population per study; each replication draws a fresh sample and runs
// every method. Replications run concurrently and are reduced in order.
MetricsTable run_study(const ScenarioConfig& cfg);

// Aggregates (estimate, lower, upper) triples against the true mean.
void finalize_metrics(MethodMetrics& m, double true_mean);

}  // namespace abgreg

#endif  // ABGREG_HARNESS_HPP_
