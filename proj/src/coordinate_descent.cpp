#include <algorithm>
#include <cmath>
#include <string>

#include "abgreg/error.hpp"
#include "abgreg/regfit.hpp"
#include "penalized_problem.hpp"

namespace abgreg {

namespace detail {

namespace {

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

}  // namespace

PenalizedProblem::PenalizedProblem(const MatrixXd& x, const VectorXd& y, const VectorXd& w,
                                   bool standardize)
    : w_(w) {
  const Index n = x.rows();
  if (y.size() != n || w.size() != n) data_error("penalized fit: inconsistent input lengths");
  if (n < 2) data_error("penalized fit needs at least two observations");
  for (Index i = 0; i < n; ++i) {
    if (!(w[i] > 0.0) || !std::isfinite(w[i])) data_error("penalized fit: weights must be positive");
  }
  w_sum_ = w.sum();
  x_mean_ = (x.transpose() * w) / w_sum_;
  y_mean_ = w.dot(y) / w_sum_;
  xt_ = x.rowwise() - x_mean_.transpose();
  yt_ = y.array() - y_mean_;
  scale_ = VectorXd::Ones(x.cols());
  v_.resize(x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    const double ss = w.dot(xt_.col(j).cwiseAbs2());
    // Relative test so columns that are constant up to rounding are dropped.
    const double ref = w.dot(x.col(j).cwiseAbs2());
    if (!(ss > 1e-24 * std::max(ref, 1e-300))) {
      scale_[j] = 0.0;
      xt_.col(j).setZero();
      v_[j] = 0.0;
      continue;
    }
    if (standardize) {
      const double s = std::sqrt(ss / w_sum_);
      scale_[j] = s;
      xt_.col(j) /= s;
      v_[j] = w_sum_;
    } else {
      v_[j] = ss;
    }
  }
  wxt_ = w.asDiagonal() * xt_;
}

void PenalizedProblem::penalty_weights(const PenaltySpec& penalty, VectorXd& l1,
                                       VectorXd& l2) const {
  const Index p = num_aux();
  l1 = VectorXd::Zero(p);
  l2 = VectorXd::Zero(p);
  auto check = [](double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) config_error("penalty lambda must be finite and >= 0");
  };
  if (const auto* r = std::get_if<RidgePenalty>(&penalty)) {
    check(r->lambda);
    l2.setConstant(r->lambda);
  } else if (const auto* l = std::get_if<LassoPenalty>(&penalty)) {
    check(l->lambda);
    l1.setConstant(l->lambda);
  } else if (const auto* a = std::get_if<AdaptiveLassoPenalty>(&penalty)) {
    check(a->lambda);
    if (a->pilot.size() != p) config_error("adaptive lasso pilot has wrong length");
    for (Index j = 0; j < p; ++j) {
      if (a->pilot[j] == 0.0) config_error("adaptive lasso pilot entries must be nonzero");
      // |beta_j| / |pilot_j| = |b_j| / (scale_j |pilot_j|)
      l1[j] = scale_[j] > 0.0 ? a->lambda / (scale_[j] * std::abs(a->pilot[j])) : 0.0;
    }
  } else if (const auto* e = std::get_if<ElasticNetPenalty>(&penalty)) {
    check(e->lambda1);
    check(e->lambda2);
    l1.setConstant(e->lambda1);
    l2.setConstant(e->lambda2);
  }
}

double PenalizedProblem::objective(const VectorXd& r, const VectorXd& b, const VectorXd& l1,
                                   const VectorXd& l2) const {
  return w_.dot(r.cwiseAbs2()) + l1.dot(b.cwiseAbs()) + l2.dot(b.cwiseAbs2());
}

double PenalizedProblem::lambda_max(const PenaltyFamily& family) const {
  const VectorXd grad = 2.0 * (wxt_.transpose() * yt_).cwiseAbs();
  switch (family.kind) {
    case PenaltyFamily::Kind::Lasso:
      return grad.maxCoeff();
    case PenaltyFamily::Kind::ElasticNet:
      if (!(family.l1_ratio > 0.0)) config_error("elastic net l1_ratio must be positive");
      return grad.maxCoeff() / family.l1_ratio;
    case PenaltyFamily::Kind::AdaptiveLasso: {
      VectorXd l1, l2;
      penalty_weights(family.at(1.0), l1, l2);
      double best = 0.0;
      for (Index j = 0; j < grad.size(); ++j) {
        if (l1[j] > 0.0) best = std::max(best, grad[j] / l1[j]);
      }
      return best;
    }
    case PenaltyFamily::Kind::Ridge:
      return 100.0 * v_.maxCoeff();
  }
  return 0.0;
}

PenalizedFit PenalizedProblem::solve(const PenaltySpec& penalty, const PenalizedOptions& options,
                                     const PenalizedFit* warm_start) const {
  const Index p = num_aux();
  VectorXd l1, l2;
  penalty_weights(penalty, l1, l2);

  VectorXd b = VectorXd::Zero(p);
  if (warm_start != nullptr && warm_start->beta1.size() == p) {
    b = warm_start->beta1.cwiseProduct(scale_);
  }
  VectorXd r = yt_ - xt_ * b;
  const VectorXd wr_scale = (v_ / w_sum_).cwiseSqrt();

  PenalizedFit fit;
  double last_obj = objective(r, b, l1, l2);
  if (options.record_objective) fit.objective_trace.push_back(last_obj);

  // One pass over `coords`; returns the largest scaled coefficient change.
  auto sweep = [&](const std::vector<Index>& coords) {
    double max_change = 0.0;
    for (Index j : coords) {
      if (v_[j] == 0.0) continue;
      const auto col = xt_.col(j);
      const double z = wxt_.col(j).dot(r) + v_[j] * b[j];
      const double b_new = soft_threshold(z, 0.5 * l1[j]) / (v_[j] + l2[j]);
      const double delta = b_new - b[j];
      if (delta != 0.0) {
        r.noalias() -= delta * col;
        b[j] = b_new;
        max_change = std::max(max_change, wr_scale[j] * std::abs(delta));
      }
    }
    return max_change;
  };

  std::vector<Index> all(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) all[j] = j;

  auto record = [&]() {
    const double obj = objective(r, b, l1, l2);
    // Exact coordinate minimization never increases the objective.
    if (obj > last_obj + 1e-12 * std::max(1.0, std::abs(last_obj))) {
      numerical_error("coordinate descent objective increased");
    }
    last_obj = obj;
    if (options.record_objective) fit.objective_trace.push_back(obj);
  };

  bool converged = false;
  int sweeps = 0;
  while (sweeps < options.max_sweeps) {
    double change = sweep(all);
    ++sweeps;
    record();
    if (change < options.tol) {
      converged = true;
      break;
    }
    // Iterate on the active set until it settles, then re-check all coordinates.
    std::vector<Index> active;
    for (Index j = 0; j < p; ++j) {
      if (b[j] != 0.0) active.push_back(j);
    }
    while (sweeps < options.max_sweeps) {
      change = sweep(active);
      ++sweeps;
      record();
      if (change < options.tol) break;
    }
  }
  if (!converged) {
    numerical_error("coordinate descent did not converge in " + std::to_string(options.max_sweeps) +
                    " sweeps");
  }

  // KKT certificate on a freshly computed residual.
  r = yt_ - xt_ * b;
  double kkt = 0.0;
  for (Index j = 0; j < p; ++j) {
    if (v_[j] == 0.0) continue;
    const double g = -2.0 * wxt_.col(j).dot(r) + 2.0 * l2[j] * b[j];
    const double viol = b[j] != 0.0 ? std::abs(g + l1[j] * (b[j] > 0.0 ? 1.0 : -1.0))
                                     : std::max(0.0, std::abs(g) - l1[j]);
    kkt = std::max(kkt, viol);
  }

  fit.beta1.resize(p);
  for (Index j = 0; j < p; ++j) fit.beta1[j] = scale_[j] > 0.0 ? b[j] / scale_[j] : 0.0;
  fit.beta0 = y_mean_ - x_mean_.dot(fit.beta1);
  fit.sweeps = sweeps;
  fit.kkt_residual = kkt / w_sum_;
  return fit;
}

}  // namespace detail

VectorXd PenalizedFit::coefficients() const {
  VectorXd out(beta1.size() + 1);
  out << beta0, beta1;
  return out;
}

PenaltySpec PenaltyFamily::at(double lambda) const {
  switch (kind) {
    case Kind::Ridge: return RidgePenalty{lambda};
    case Kind::Lasso: return LassoPenalty{lambda};
    case Kind::AdaptiveLasso: return AdaptiveLassoPenalty{lambda, pilot};
    case Kind::ElasticNet: return ElasticNetPenalty{l1_ratio * lambda, (1.0 - l1_ratio) * lambda};
  }
  return NoPenalty{};
}

PenalizedFit fit_penalized(const MatrixXd& x, const VectorXd& y, const VectorXd& w,
                           const PenaltySpec& penalty, const PenalizedOptions& options,
                           const PenalizedFit* warm_start) {
  detail::PenalizedProblem problem(x, y, w, options.standardize);
  return problem.solve(penalty, options, warm_start);
}

PenalizedFit fit_penalized(const Sample& sample, const PenaltySpec& penalty,
                           const PenalizedOptions& options) {
  return fit_penalized(sample.x(), sample.y(), sample.weights(), penalty, options);
}

double penalized_objective(const MatrixXd& x, const VectorXd& y, const VectorXd& w,
                           const PenaltySpec& penalty, bool standardize, double beta0,
                           const VectorXd& beta1) {
  detail::PenalizedProblem problem(x, y, w, standardize);
  VectorXd l1, l2;
  problem.penalty_weights(penalty, l1, l2);
  const VectorXd b = beta1.cwiseProduct(problem.scale());
  const VectorXd r = y - x * beta1 - VectorXd::Constant(y.size(), beta0);
  return w.dot(r.cwiseAbs2()) + l1.dot(b.cwiseAbs()) + l2.dot(b.cwiseAbs2());
}

double lambda_max(const MatrixXd& x, const VectorXd& y, const VectorXd& w,
                  const PenaltyFamily& family, bool standardize) {
  return detail::PenalizedProblem(x, y, w, standardize).lambda_max(family);
}

}  // namespace abgreg
