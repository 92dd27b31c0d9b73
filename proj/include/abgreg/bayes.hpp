#ifndef ABGREG_BAYES_HPP_
#define ABGREG_BAYES_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <variant>
#include <vector>

#include "abgreg/regfit.hpp"
#include "abgreg/rng.hpp"
#include "abgreg/survey.hpp"

namespace abgreg {

struct FlatPrior {};

// beta_k | tau_k^2 ~ N(0, tau_k^2), tau_k^2 ~ Exp(rate lambda^2 / 2),
// lambda^2 ~ Gamma(shape a, rate b). `fixed_lambda2` pins lambda^2 instead.
struct LaplacePrior {
  double a = 1.0;
  double b = 1.0;
  std::optional<double> fixed_lambda2;
};

// beta_k | u_k, lambda ~ N(0, lambda^2 u_k^2), u_k ~ C+(0, 1), lambda ~ C+(0, 1),
// sampled through the inverse-gamma auxiliary scheme (xi_k, gamma).
struct HorseshoePrior {};

using PriorSpec = std::variant<FlatPrior, LaplacePrior, HorseshoePrior>;

struct McmcConfig {
  int n_draws = 2000;
  int burn_in = 200;
  std::uint64_t seed = 1;
  int thin = 1;

  void validate() const;
};

struct McmcState {
  VectorXd beta;
  double lambda2 = 1.0;
  VectorXd local2;  // tau_k^2 (Laplace) or u_k^2 (horseshoe)
  VectorXd xi;      // horseshoe only
  double gamma_aux = 1.0;

  void validate() const;
};

struct PosteriorDraws {
  MatrixXd beta;    // n_draws x dim
  VectorXd lambda;  // global scale lambda per retained draw; empty for Flat
  VectorXd ybar;
  McmcConfig config;
};

struct PosteriorSummary {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.0;
  Index n_draws = 0;
};

// Normal approximation N(estimate, covariance) to the sampling distribution of
// a coefficient estimator, the likelihood the coefficient chain runs on.
// Coordinates with shrink[k] == false get a flat prior under any PriorSpec.
struct CoefficientLikelihood {
  VectorXd estimate;
  MatrixXd covariance;
  std::vector<bool> shrink;

  static CoefficientLikelihood from_fit(const RegressionFit& fit);
};

// Precomputes the factorizations shared by every sweep of one chain.
class ShrinkageSampler {
 public:
  explicit ShrinkageSampler(CoefficientLikelihood likelihood);

  Index dim() const { return estimate_.size(); }
  Index num_shrunk() const { return num_shrunk_; }
  double jitter() const { return jitter_; }
  bool shrinks(Index k) const { return shrink_[static_cast<std::size_t>(k)]; }

  // Draw from N(estimate, covariance).
  VectorXd draw_flat(Rng& rng) const;
  // Draw from N(A^{-1} P estimate, A^{-1}), A = P + diag(1 / prior_var) over
  // shrunk coordinates, P the inverse covariance.
  VectorXd draw_conditional_beta(const VectorXd& prior_var, Rng& rng) const;

  McmcState initial_state(const PriorSpec& prior) const;
  void step_laplace(McmcState& state, const LaplacePrior& prior, Rng& rng) const;
  void step_horseshoe(McmcState& state, Rng& rng) const;

 private:
  VectorXd estimate_;
  MatrixXd precision_;
  VectorXd precision_estimate_;
  MatrixXd cov_factor_;  // lower Cholesky factor of the (jittered) covariance
  std::vector<bool> shrink_;
  Index num_shrunk_ = 0;
  double jitter_ = 0.0;
};

// Individual full conditionals.
namespace conditional {
// 1 / tau^2 ~ InvGaussian(mean sqrt(lambda^2 / beta^2), shape lambda^2); returns tau^2.
double laplace_tau2(double beta, double lambda2, Rng& rng);
// Gamma(a + p, b + sum tau^2 / 2).
double laplace_lambda2(const VectorXd& tau2, const LaplacePrior& prior, Rng& rng);
// InvGamma(1, 1/xi + beta^2 / (2 lambda^2)).
double horseshoe_u2(double beta, double lambda2, double xi, Rng& rng);
// InvGamma(1, 1 + 1/u^2).
double horseshoe_xi(double u2, Rng& rng);
// InvGamma((p + 1) / 2, 1/gamma + sum beta^2 / (2 u^2)).
double horseshoe_lambda2(const VectorXd& beta, const VectorXd& u2, double gamma, Rng& rng);
// InvGamma(1, 1 + 1/lambda^2).
double horseshoe_gamma(double lambda2, Rng& rng);
}  // namespace conditional

// |beta| below this is replaced by it in the local-scale conditionals.
inline constexpr double kBetaFloor = 1e-12;

VectorXd sample_beta_flat(const RegressionFit& fit, Rng& rng);
McmcState gibbs_step_laplace(const McmcState& state, const RegressionFit& fit,
                             const LaplacePrior& prior, Rng& rng);
McmcState gibbs_step_horseshoe(const McmcState& state, const RegressionFit& fit, Rng& rng);

// One draw of the population mean from N(greg_mean(beta1), variance_e(beta1)).
double sample_ybar(const Sample& sample, const AuxTotals& aux, const VectorXd& beta1, Rng& rng);

using YbarDraw = std::function<double(const VectorXd& beta, Rng& rng)>;

// Two-step sampler: coefficient draw from the (shrinkage) posterior, then the
// population mean from its conditional given those coefficients.
PosteriorDraws run_chain(const CoefficientLikelihood& likelihood, const PriorSpec& prior,
                         const McmcConfig& config, const YbarDraw& ybar_draw);

PosteriorDraws run_posterior(const Sample& sample, const AuxTotals& aux, const PriorSpec& prior,
                             const McmcConfig& config);

// Type-7 quantile of sorted data: h = (n - 1) q, linear interpolation between
// the order statistics at floor(h) and floor(h) + 1.
double quantile_sorted(const std::vector<double>& sorted, double q);

// Posterior mean and equal-tailed interval. Intervals need >= 100 draws.
PosteriorSummary summarize(const PosteriorDraws& draws, double level);
double posterior_mean(const PosteriorDraws& draws);

}  // namespace abgreg

#endif  // ABGREG_BAYES_HPP_
