#include "abgreg/glm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <variant>

#include "abgreg/error.hpp"
#include "abgreg/rng.hpp"

namespace abgreg {

double LogisticModel::mean(double eta) const {
  const double m = eta >= 0.0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
  return std::clamp(m, kEps, 1.0 - kEps);
}

double LogisticModel::mean_derivative(double eta) const {
  const double m = mean(eta);
  return m * (1.0 - m);
}

bool LogisticModel::clamps(double eta) const {
  const double m = eta >= 0.0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
  return m < kEps || m > 1.0 - kEps;
}

double LogisticModel::initial_intercept(double weighted_mean) const {
  const double m = std::clamp(weighted_mean, 1e-6, 1.0 - 1e-6);
  return std::log(m / (1.0 - m));
}

double LogisticModel::unit_deviance(double y, double m) const {
  double d = 0.0;
  if (y > 0.0) d += y * std::log(y / m);
  if (y < 1.0) d += (1.0 - y) * std::log((1.0 - y) / (1.0 - m));
  return 2.0 * d;
}

std::unique_ptr<WorkingModel> make_working_model(const std::string& name) {
  if (name == "logistic") return std::make_unique<LogisticModel>();
  if (name == "identity" || name == "linear") return std::make_unique<IdentityModel>();
  config_error("unknown working model '" + name + "'");
}

VectorXd linear_predictor(const MatrixXd& x, const VectorXd& beta) {
  if (beta.size() != x.cols() + 1) data_error("coefficient vector must hold an intercept plus one entry per auxiliary");
  VectorXd eta = x * beta.tail(x.cols());
  eta.array() += beta[0];
  return eta;
}

namespace {

MatrixXd with_intercept(const MatrixXd& x) {
  MatrixXd z(x.rows(), x.cols() + 1);
  z.col(0).setOnes();
  z.rightCols(x.cols()) = x;
  return z;
}

}  // namespace

VectorXd estimating_function(const Sample& sample, const WorkingModel& model, const VectorXd& beta) {
  const VectorXd eta = linear_predictor(sample.x(), beta);
  const VectorXd w = sample.weights();
  VectorXd c(sample.size());
  for (Index i = 0; i < c.size(); ++i) {
    c[i] = w[i] * (sample.y()[i] - model.mean(eta[i])) * model.h_scale(eta[i]);
  }
  VectorXd u(beta.size());
  u[0] = c.sum();
  u.tail(sample.num_aux()) = sample.x().transpose() * c;
  return u;
}

// d/dbeta [w (y - m) hs z] = w [-(dm/deta) hs + (y - m) hs'] z z'.
MatrixXd estimating_jacobian(const Sample& sample, const WorkingModel& model, const VectorXd& beta) {
  const VectorXd eta = linear_predictor(sample.x(), beta);
  const VectorXd w = sample.weights();
  VectorXd c(sample.size());
  for (Index i = 0; i < c.size(); ++i) {
    const double m = model.mean(eta[i]);
    c[i] = w[i] * (-model.mean_derivative(eta[i]) * model.h_scale(eta[i]) +
                   (sample.y()[i] - m) * model.h_scale_derivative(eta[i]));
  }
  const MatrixXd z = with_intercept(sample.x());
  return z.transpose() * c.asDiagonal() * z;
}

namespace {

VectorXd newton_direction(const MatrixXd& jac, const VectorXd& u) {
  Eigen::PartialPivLU<MatrixXd> lu(jac);
  if (lu.rcond() > 1e-14) return lu.solve(-u);
  MatrixXd jittered = jac;
  const double avg = jac.diagonal().cwiseAbs().mean();
  // Jacobians of these equations are negative (semi)definite.
  jittered.diagonal().array() -= 1e-10 * std::max(avg, 1e-300);
  Eigen::PartialPivLU<MatrixXd> lu2(jittered);
  if (!(lu2.rcond() > 1e-14)) numerical_error("estimating-equation Jacobian is singular after jitter");
  return lu2.solve(-u);
}

}  // namespace

GlmFit solve_ee(const Sample& sample, const WorkingModel& model, const VectorXd& init,
                const GlmOptions& options) {
  const Index n = sample.size();
  const Index p = sample.num_aux();
  if (n <= p + 1) data_error("solve_ee needs n > p + 1");

  VectorXd beta = VectorXd::Zero(p + 1);
  if (init.size() == p + 1) {
    beta = init;
  } else if (init.size() != 0) {
    data_error("solve_ee: initial value has wrong length");
  } else {
    const VectorXd w = sample.weights();
    beta[0] = model.initial_intercept(w.dot(sample.y()) / w.sum());
  }

  GlmFit fit;
  VectorXd u = estimating_function(sample, model, beta);
  double merit = u.norm();
  for (int it = 0; it < options.max_iter; ++it) {
    if (u.cwiseAbs().maxCoeff() <= options.tol) {
      fit.converged = true;
      break;
    }
    const VectorXd step = newton_direction(estimating_jacobian(sample, model, beta), u);
    double t = 1.0;
    bool improved = false;
    VectorXd trial, u_trial;
    for (int h = 0; h <= options.max_halvings; ++h, t *= 0.5) {
      trial = beta + t * step;
      u_trial = estimating_function(sample, model, trial);
      if (u_trial.allFinite() && u_trial.norm() < merit) {
        improved = true;
        break;
      }
    }
    fit.iterations = it + 1;
    if (!improved) break;
    beta = trial;
    u = u_trial;
    merit = u.norm();
    if (beta.cwiseAbs().maxCoeff() > options.divergence) {
      numerical_error("estimating equations diverged (possible separation)");
    }
  }
  if (!fit.converged && u.cwiseAbs().maxCoeff() <= options.tol) fit.converged = true;

  fit.beta = beta;
  fit.score_norm = u.cwiseAbs().maxCoeff();
  const VectorXd eta = linear_predictor(sample.x(), beta);
  for (Index i = 0; i < n; ++i) fit.clamped += model.clamps(eta[i]) ? 1 : 0;

  // Sandwich J^{-1} M J^{-T}, M the pairwise outer sum of g_i = e_i h_i / pi_i.
  const MatrixXd jac = estimating_jacobian(sample, model, beta);
  const MatrixXd z = with_intercept(sample.x());
  VectorXd scale(n);
  for (Index i = 0; i < n; ++i) {
    scale[i] = (sample.y()[i] - model.mean(eta[i])) * model.h_scale(eta[i]) / sample.pi()[i];
  }
  const MatrixXd g = scale.asDiagonal() * z;
  const MatrixXd middle = pairwise_outer_sum(sample, g);
  Eigen::PartialPivLU<MatrixXd> lu(jac);
  if (!(lu.rcond() > 1e-14)) numerical_error("estimating-equation Jacobian is singular at the solution");
  const MatrixXd jinv = lu.inverse();
  const MatrixXd v = jinv * middle * jinv.transpose();
  fit.vbeta = 0.5 * (v + v.transpose());
  return fit;
}

double model_assisted_mean(const MatrixXd& pop_x, const Sample& sample, const WorkingModel& model,
                           const VectorXd& beta) {
  if (pop_x.rows() == 0) data_error("model-assisted mean needs unit-level population covariates");
  if (pop_x.cols() != sample.num_aux()) data_error("population covariates have the wrong number of columns");
  const VectorXd pop_eta = linear_predictor(pop_x, beta);
  double total = 0.0;
  for (Index i = 0; i < pop_eta.size(); ++i) total += model.mean(pop_eta[i]);
  const VectorXd eta = linear_predictor(sample.x(), beta);
  for (Index i = 0; i < sample.size(); ++i) {
    total += (sample.y()[i] - model.mean(eta[i])) / sample.pi()[i];
  }
  return total / static_cast<double>(pop_x.rows());
}

double variance_e_m(const Sample& sample, const WorkingModel& model, const VectorXd& beta) {
  const VectorXd eta = linear_predictor(sample.x(), beta);
  VectorXd a(sample.size());
  for (Index i = 0; i < a.size(); ++i) a[i] = (sample.y()[i] - model.mean(eta[i])) / sample.pi()[i];
  const double N = sample.pop_size();
  return pairwise_quadratic_form(sample, a) / (N * N);
}

PosteriorDraws run_posterior_glm(const Sample& sample, const MatrixXd& pop_x, const WorkingModel& model,
                                 const PriorSpec& prior, const McmcConfig& config) {
  const GlmFit fit = solve_ee(sample, model);
  if (!fit.converged) numerical_error("estimating equations did not converge");
  CoefficientLikelihood lik;
  lik.estimate = fit.beta;
  lik.covariance = fit.vbeta;
  lik.shrink.assign(static_cast<std::size_t>(fit.beta.size()), true);
  lik.shrink[0] = false;
  return run_chain(lik, prior, config, [&](const VectorXd& beta, Rng& rng) {
    const double mean = model_assisted_mean(pop_x, sample, model, beta);
    const double var = variance_e_m(sample, model, beta);
    if (var < 0.0) numerical_error("negative design variance; check the pairwise policy");
    return var == 0.0 ? mean : mean + std::sqrt(var) * draw_normal(rng);
  });
}

double weighted_deviance(const WorkingModel& model, const VectorXd& y, const VectorXd& m, const VectorXd& w) {
  double d = 0.0;
  for (Index i = 0; i < y.size(); ++i) d += w[i] * model.unit_deviance(y[i], m[i]);
  return d;
}

namespace {

struct WorkingProblem {
  VectorXd z;  // working response
  VectorXd w;  // working weights
};

WorkingProblem working_problem(const WorkingModel& model, const VectorXd& y, const VectorXd& w,
                               const VectorXd& eta) {
  WorkingProblem wp{VectorXd(y.size()), VectorXd(y.size())};
  for (Index i = 0; i < y.size(); ++i) {
    const double m = model.mean(eta[i]);
    const double d = model.mean_derivative(eta[i]);
    wp.z[i] = eta[i] + (y[i] - m) / d;
    wp.w[i] = w[i] * d * d / model.variance(m);
  }
  return wp;
}

// Design-weighted standard deviation of each column; 1 for constant columns.
VectorXd column_scales(const MatrixXd& x, const VectorXd& w) {
  const double ws = w.sum();
  const VectorXd xm = x.transpose() * w / ws;
  VectorXd s = VectorXd::Ones(x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    const double v = w.dot((x.col(j).array() - xm[j]).square().matrix()) / ws;
    if (v > 0.0) s[j] = std::sqrt(v);
  }
  return s;
}

PenalizedGlmFit irls_fixed_scale(const MatrixXd& x, const VectorXd& y, const VectorXd& w,
                                 const WorkingModel& model, const PenaltySpec& penalty,
                                 const PenalizedOptions& options, const VectorXd& init) {
  const Index p = x.cols();
  PenalizedFit current;
  if (init.size() == p + 1) {
    current.beta0 = init[0];
    current.beta1 = init.tail(p);
  } else {
    current.beta0 = model.initial_intercept(w.dot(y) / w.sum());
    current.beta1 = VectorXd::Zero(p);
  }
  PenalizedGlmFit out;
  constexpr int kMaxIter = 50;
  for (int it = 0; it < kMaxIter; ++it) {
    VectorXd eta = x * current.beta1;
    eta.array() += current.beta0;
    const WorkingProblem wp = working_problem(model, y, w, eta);
    PenalizedFit next = fit_penalized(x, wp.z, wp.w, penalty, options, &current);
    const double change = std::max(std::abs(next.beta0 - current.beta0),
                                   p > 0 ? (next.beta1 - current.beta1).cwiseAbs().maxCoeff() : 0.0);
    const double size = std::max(std::abs(next.beta0), p > 0 ? next.beta1.cwiseAbs().maxCoeff() : 0.0);
    current = std::move(next);
    out.iterations = it + 1;
    if (size > 1e3) numerical_error("penalized IRLS diverged (possible separation)");
    if (change <= 1e-8 * (1.0 + size)) {
      out.converged = true;
      break;
    }
  }
  if (!out.converged) numerical_error("penalized IRLS did not converge");
  out.beta = current.coefficients();
  return out;
}

// The penalty acts on coefficients of columns scaled by their design-weighted
// standard deviation. The scales are fixed before iterating, so every IRLS
// step works on the same objective: weighted deviance plus penalty.
PenalizedGlmFit irls(const MatrixXd& x, const VectorXd& y, const VectorXd& w, const WorkingModel& model,
                     const PenaltySpec& penalty, const PenalizedOptions& options, const VectorXd& init) {
  PenalizedOptions inner = options;
  inner.standardize = false;
  if (!options.standardize) return irls_fixed_scale(x, y, w, model, penalty, inner, init);
  const VectorXd s = column_scales(x, w);
  VectorXd scaled_init = init;
  if (init.size() == x.cols() + 1) scaled_init.tail(x.cols()) = init.tail(x.cols()).cwiseProduct(s);
  PenaltySpec scaled_penalty = penalty;
  if (auto* a = std::get_if<AdaptiveLassoPenalty>(&scaled_penalty)) {
    if (a->pilot.size() == x.cols()) a->pilot = a->pilot.cwiseProduct(s);
  }
  PenalizedGlmFit fit =
      irls_fixed_scale(x * s.cwiseInverse().asDiagonal(), y, w, model, scaled_penalty, inner, scaled_init);
  fit.beta.tail(x.cols()) = fit.beta.tail(x.cols()).cwiseQuotient(s);
  return fit;
}

}  // namespace

PenalizedGlmFit fit_penalized_glm(const Sample& sample, const WorkingModel& model, const PenaltySpec& penalty,
                                  const PenalizedOptions& options, const VectorXd& init) {
  return irls(sample.x(), sample.y(), sample.weights(), model, penalty, options, init);
}

std::vector<double> lambda_grid_glm(const Sample& sample, const WorkingModel& model,
                                    const PenaltyFamily& family, int count, double ratio) {
  if (count < 1) config_error("lambda grid needs at least one point");
  if (!(ratio > 0.0 && ratio < 1.0)) config_error("lambda grid ratio must lie in (0, 1)");
  // The intercept-only fit is the penalized solution for lambda >= lambda_max,
  // so lambda_max follows from the working problem there.
  const VectorXd w = sample.weights();
  const double eta0 = model.initial_intercept(w.dot(sample.y()) / w.sum());
  const WorkingProblem wp = working_problem(model, sample.y(), w, VectorXd::Constant(sample.size(), eta0));
  const VectorXd s = column_scales(sample.x(), w);
  PenaltyFamily scaled = family;
  if (scaled.pilot.size() == s.size()) scaled.pilot = scaled.pilot.cwiseProduct(s);
  const double top = lambda_max(sample.x() * s.cwiseInverse().asDiagonal(), wp.z, wp.w, scaled, false);
  std::vector<double> grid(static_cast<std::size_t>(count), std::max(top, 0.0));
  if (count == 1 || !(top > 0.0)) return grid;
  const double step = std::log(ratio) / static_cast<double>(count - 1);
  for (int k = 0; k < count; ++k) grid[k] = top * std::exp(step * k);
  return grid;
}

CvResult cv_select_lambda_glm(const Sample& sample, const WorkingModel& model, const PenaltyFamily& family,
                              int folds, const std::vector<double>& grid, std::uint64_t seed,
                              const PenalizedOptions& options) {
  if (grid.empty()) config_error("cross-validation grid is empty");
  if (!std::is_sorted(grid.begin(), grid.end(), std::greater<>())) {
    config_error("cross-validation grid must be sorted in descending order");
  }
  const Index n = sample.size();
  const Index p = sample.num_aux();
  const std::vector<int> label = assign_folds(n, folds, seed);
  const VectorXd w = sample.weights();
  const std::size_t G = grid.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::vector<std::vector<double>> errors(static_cast<std::size_t>(folds), std::vector<double>(G, kInf));
  for (int f = 0; f < folds; ++f) {
    std::vector<Index> train, test;
    for (Index i = 0; i < n; ++i) (label[i] == f ? test : train).push_back(i);
    const auto nt = static_cast<Index>(train.size());
    MatrixXd xt(nt, p);
    VectorXd yt(nt), wt(nt);
    for (Index k = 0; k < nt; ++k) {
      xt.row(k) = sample.x().row(train[k]);
      yt[k] = sample.y()[train[k]];
      wt[k] = w[train[k]];
    }
    VectorXd warm;
    for (std::size_t g = 0; g < G; ++g) {
      PenalizedGlmFit fit;
      try {
        fit = irls(xt, yt, wt, model, family.at(grid[g]), options, warm);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Numerical) throw;
        break;
      }
      double loss = 0.0, norm = 0.0;
      for (Index i : test) {
        const double eta = fit.beta[0] + sample.x().row(i).dot(fit.beta.tail(p));
        loss += w[i] * model.unit_deviance(sample.y()[i], model.mean(eta));
        norm += w[i];
      }
      errors[f][g] = loss / norm;
      warm = fit.beta;
    }
  }

  CvResult out;
  out.mean_error.assign(G, 0.0);
  for (std::size_t g = 0; g < G; ++g) {
    for (int f = 0; f < folds; ++f) out.mean_error[g] += errors[f][g];
    out.mean_error[g] /= folds;
  }
  std::size_t best = 0;
  for (std::size_t g = 1; g < G; ++g) {
    if (out.mean_error[g] < out.mean_error[best]) best = g;
  }
  out.lambda = grid[best];
  return out;
}

}  // namespace abgreg
