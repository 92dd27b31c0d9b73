#ifndef ABGREG_REGFIT_HPP_
#define ABGREG_REGFIT_HPP_

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "abgreg/survey.hpp"

namespace abgreg {

// Design-weighted least squares fit with its sandwich covariance. `vbeta` is
// ordered (intercept, beta1) so vbeta11 is the trailing p x p block.
struct RegressionFit {
  double beta0 = 0.0;
  VectorXd beta1;
  MatrixXd vbeta;
  VectorXd residuals;
  // Ridge added to the weighted normal matrix before inversion (0 if none).
  double jitter = 0.0;

  VectorXd coefficients() const;
  MatrixXd vbeta11() const { return vbeta.bottomRightCorner(beta1.size(), beta1.size()); }
};

RegressionFit fit_wls(const Sample& sample);

// Penalties on beta1 (never the intercept), written exactly as they are added
// to the weighted loss sum_i w_i (y_i - b0 - x_i' b)^2:
struct NoPenalty {};
struct RidgePenalty {
  double lambda = 0.0;  // lambda * sum b_j^2
};
struct LassoPenalty {
  double lambda = 0.0;  // lambda * sum |b_j|
};
struct AdaptiveLassoPenalty {
  double lambda = 0.0;  // lambda * sum |b_j| / |pilot_j|
  VectorXd pilot;
};
struct ElasticNetPenalty {
  double lambda1 = 0.0;  // lambda1 * sum |b_j| + lambda2 * sum b_j^2
  double lambda2 = 0.0;
};
using PenaltySpec =
    std::variant<NoPenalty, RidgePenalty, LassoPenalty, AdaptiveLassoPenalty, ElasticNetPenalty>;

struct PenalizedOptions {
  // Center and scale predictors by weighted moments before penalizing; the
  // penalty then acts on the standardized coefficients. Returned coefficients
  // are always on the original scale.
  bool standardize = true;
  int max_sweeps = 10000;
  // Convergence: max_j sqrt(v_j / sum w) |change in b_j| below tol.
  double tol = 1e-10;
  bool record_objective = false;
};

struct PenalizedFit {
  double beta0 = 0.0;
  VectorXd beta1;
  int sweeps = 0;
  // Largest per-coordinate KKT violation of the objective divided by sum(w).
  double kkt_residual = 0.0;
  std::vector<double> objective_trace;

  VectorXd coefficients() const;
};

// Coordinate descent on sum_i w_i (y_i - b0 - x_i' b)^2 + P(b). The
// closed-form coordinate update is b_j = S(z_j, l1_j / 2) / (v_j + l2_j).
PenalizedFit fit_penalized(const Sample& sample, const PenaltySpec& penalty,
                           const PenalizedOptions& options = {});
PenalizedFit fit_penalized(const MatrixXd& x, const VectorXd& y, const VectorXd& w,
                           const PenaltySpec& penalty, const PenalizedOptions& options = {},
                           const PenalizedFit* warm_start = nullptr);

double penalized_objective(const MatrixXd& x, const VectorXd& y, const VectorXd& w,
                           const PenaltySpec& penalty, bool standardize, double beta0,
                           const VectorXd& beta1);

// A penalty family indexed by a single lambda, as searched by cross-validation.
struct PenaltyFamily {
  enum class Kind { Ridge, Lasso, AdaptiveLasso, ElasticNet };
  Kind kind = Kind::Lasso;
  VectorXd pilot;          // AdaptiveLasso only
  double l1_ratio = 0.5;   // ElasticNet only: lambda1 = r lambda, lambda2 = (1-r) lambda

  PenaltySpec at(double lambda) const;
  static PenaltyFamily lasso() { return {Kind::Lasso, {}, 0.5}; }
  static PenaltyFamily ridge() { return {Kind::Ridge, {}, 0.5}; }
};

// Smallest lambda with b = 0 for l1-type families (from the KKT conditions);
// for ridge, 100 * max_j v_j where v_j is the weighted sum of squares of the
// (standardized) column.
double lambda_max(const MatrixXd& x, const VectorXd& y, const VectorXd& w,
                  const PenaltyFamily& family, bool standardize = true);
// Log-spaced, descending: lambda_max down to ratio * lambda_max.
std::vector<double> lambda_grid(const Sample& sample, const PenaltyFamily& family,
                                int count = 100, double ratio = 1e-4, bool standardize = true);

struct CvOptions {
  bool weighted_loss = true;
  PenalizedOptions fit;
};

struct CvResult {
  double lambda = 0.0;
  std::vector<double> mean_error;  // aligned with the grid
};

// K-fold cross-validation; ties go to the larger lambda.
CvResult cv_select_lambda(const Sample& sample, const PenaltyFamily& family, int folds,
                          const std::vector<double>& grid, std::uint64_t seed,
                          const CvOptions& options = {});

// Fold label per unit, deterministic in the seed. Throws if any fold would
// hold fewer than two units.
std::vector<int> assign_folds(Index n, int folds, std::uint64_t seed);

struct ForwardSelection {
  std::vector<Index> selected;  // in order of entry
  RegressionFit fit;            // fit_wls on the selected columns
  double adjusted_r2 = 0.0;

  // beta1 expanded to all p auxiliaries (zeros for excluded columns).
  VectorXd full_beta1(Index p) const;
};

// Greedy forward selection on (weighted) adjusted R^2, starting from the
// intercept-only model.
ForwardSelection forward_select(const Sample& sample, bool weighted = true);

// Weighted adjusted R^2 of an intercept-plus-columns least squares fit.
double adjusted_r2(const Sample& sample, const std::vector<Index>& columns, bool weighted = true);

}  // namespace abgreg

#endif  // ABGREG_REGFIT_HPP_
