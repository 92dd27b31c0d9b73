#ifndef ABGREG_SRC_PENALIZED_PROBLEM_HPP_
#define ABGREG_SRC_PENALIZED_PROBLEM_HPP_

#include "abgreg/regfit.hpp"

namespace abgreg::detail {

// Centered (and optionally scaled) weighted least squares problem, set up once
// and solved for any number of penalties. Coordinates live in the
// standardized space b_j = beta_j * scale_j.
class PenalizedProblem {
 public:
  PenalizedProblem(const MatrixXd& x, const VectorXd& y, const VectorXd& w, bool standardize);

  PenalizedFit solve(const PenaltySpec& penalty, const PenalizedOptions& options,
                     const PenalizedFit* warm_start) const;

  // Per-coordinate (l1, l2) weights in the standardized space.
  void penalty_weights(const PenaltySpec& penalty, VectorXd& l1, VectorXd& l2) const;

  double lambda_max(const PenaltyFamily& family) const;

  Index num_aux() const { return xt_.cols(); }
  const VectorXd& scale() const { return scale_; }
  const VectorXd& x_mean() const { return x_mean_; }
  double y_mean() const { return y_mean_; }

  // Objective in the standardized space for coefficients b and residual r.
  double objective(const VectorXd& r, const VectorXd& b, const VectorXd& l1,
                   const VectorXd& l2) const;

 private:
  MatrixXd xt_;      // centered / scaled predictors
  MatrixXd wxt_;     // diag(w) * xt_
  VectorXd yt_;      // centered response
  VectorXd w_;
  double w_sum_ = 0.0;
  VectorXd x_mean_;
  double y_mean_ = 0.0;
  VectorXd scale_;   // 1 when not standardizing; 0 marks a constant column
  VectorXd v_;       // sum_i w_i xt_ij^2
};

}  // namespace abgreg::detail

#endif  // ABGREG_SRC_PENALIZED_PROBLEM_HPP_
