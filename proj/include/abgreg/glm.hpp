#ifndef ABGREG_GLM_HPP_
#define ABGREG_GLM_HPP_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "abgreg/bayes.hpp"
#include "abgreg/regfit.hpp"
#include "abgreg/survey.hpp"

namespace abgreg {

// Single-index working model m(x; beta) = g(eta), eta = beta0 + x' beta1.
// The estimating-equation weight is h(x; beta) = z * h_scale(eta) with
// z = (1, x'), i.e. h_scale = (dm/deta) / a(m).
class WorkingModel {
 public:
  virtual ~WorkingModel() = default;

  virtual std::string name() const = 0;
  virtual double mean(double eta) const = 0;
  virtual double mean_derivative(double eta) const = 0;
  virtual double variance(double m) const = 0;
  virtual double h_scale(double eta) const = 0;
  virtual double h_scale_derivative(double eta) const = 0;
  // Whether mean(eta) was pushed inside the admissible range.
  virtual bool clamps(double /*eta*/) const { return false; }
  // Intercept of the starting point given the weighted response mean.
  virtual double initial_intercept(double weighted_mean) const = 0;
  // Deviance contribution of one unit.
  virtual double unit_deviance(double y, double m) const = 0;
};

// m = 1 / (1 + exp(-eta)) clamped to [eps, 1 - eps]; a(m) = m (1 - m); h = z.
class LogisticModel final : public WorkingModel {
 public:
  static constexpr double kEps = 1e-12;

  std::string name() const override { return "logistic"; }
  double mean(double eta) const override;
  double mean_derivative(double eta) const override;
  double variance(double m) const override { return m * (1.0 - m); }
  double h_scale(double) const override { return 1.0; }
  double h_scale_derivative(double) const override { return 0.0; }
  bool clamps(double eta) const override;
  double initial_intercept(double weighted_mean) const override;
  double unit_deviance(double y, double m) const override;
};

// m = eta; a = 1. Reduces every estimator here to its linear counterpart.
class IdentityModel final : public WorkingModel {
 public:
  std::string name() const override { return "identity"; }
  double mean(double eta) const override { return eta; }
  double mean_derivative(double) const override { return 1.0; }
  double variance(double) const override { return 1.0; }
  double h_scale(double) const override { return 1.0; }
  double h_scale_derivative(double) const override { return 0.0; }
  double initial_intercept(double weighted_mean) const override { return weighted_mean; }
  double unit_deviance(double y, double m) const override { return (y - m) * (y - m); }
};

std::unique_ptr<WorkingModel> make_working_model(const std::string& name);

struct GlmOptions {
  double tol = 1e-8;          // on the sup norm of the estimating function
  int max_iter = 100;
  int max_halvings = 30;
  double divergence = 1e3;    // sup norm of beta treated as separation
};

struct GlmFit {
  VectorXd beta;   // (intercept, beta1)
  MatrixXd vbeta;  // sandwich covariance, same ordering
  bool converged = false;
  int iterations = 0;
  double score_norm = 0.0;  // sup norm of the estimating function at beta
  Index clamped = 0;        // sampled units whose mean hit the clamp at beta
};

// Design-weighted estimating function sum_A w_i (y_i - m_i) h_i and its
// Jacobian with respect to beta.
VectorXd estimating_function(const Sample& sample, const WorkingModel& model, const VectorXd& beta);
MatrixXd estimating_jacobian(const Sample& sample, const WorkingModel& model, const VectorXd& beta);

// Newton iterations with step-halving on the norm of the estimating function.
// `init` empty means beta1 = 0 and intercept from the weighted response mean.
GlmFit solve_ee(const Sample& sample, const WorkingModel& model, const VectorXd& init = {},
                const GlmOptions& options = {});

// Linear predictors for rows of x.
VectorXd linear_predictor(const MatrixXd& x, const VectorXd& beta);

// N^{-1} { sum_U m(x_i; beta) + sum_A (y_i - m(x_i; beta)) / pi_i }, N = rows of pop_x.
double model_assisted_mean(const MatrixXd& pop_x, const Sample& sample, const WorkingModel& model,
                           const VectorXd& beta);
// Design variance of the above with raw residuals y_i - m(x_i; beta).
double variance_e_m(const Sample& sample, const WorkingModel& model, const VectorXd& beta);

// Two-step sampler on (beta_hat, V_beta) from solve_ee; the intercept is
// never shrunk.
PosteriorDraws run_posterior_glm(const Sample& sample, const MatrixXd& pop_x, const WorkingModel& model,
                                 const PriorSpec& prior, const McmcConfig& config);

// Penalized fit by iteratively reweighted least squares: each step solves the
// penalized weighted least squares problem with weights w_i (dm_i/deta)^2 / a(m_i)
// and working response eta_i + (y_i - m_i) / (dm_i/deta).
// The objective is the design-weighted deviance plus the penalty. With
// options.standardize the penalty acts on the coefficients of columns scaled by
// their design-weighted standard deviation.
struct PenalizedGlmFit {
  VectorXd beta;  // (intercept, beta1)
  int iterations = 0;
  bool converged = false;
};

PenalizedGlmFit fit_penalized_glm(const Sample& sample, const WorkingModel& model, const PenaltySpec& penalty,
                                  const PenalizedOptions& options = {}, const VectorXd& init = {});

double weighted_deviance(const WorkingModel& model, const VectorXd& y, const VectorXd& m, const VectorXd& w);

std::vector<double> lambda_grid_glm(const Sample& sample, const WorkingModel& model,
                                    const PenaltyFamily& family, int count = 100, double ratio = 1e-4);

// K-fold cross-validation on held-out design-weighted deviance; ties go to the
// larger lambda. A fold whose path fails to converge scores +inf from there on.
CvResult cv_select_lambda_glm(const Sample& sample, const WorkingModel& model, const PenaltyFamily& family,
                              int folds, const std::vector<double>& grid, std::uint64_t seed,
                              const PenalizedOptions& options = {});

}  // namespace abgreg

#endif  // ABGREG_GLM_HPP_
