#include <algorithm>
#include <cmath>
#include <string>

#include "abgreg/bayes.hpp"
#include "abgreg/error.hpp"

namespace abgreg {

namespace {

// Scale variables are kept inside [kScaleMin, kScaleMax] so precisions and
// rates stay finite.
constexpr double kScaleMin = 1e-300;
constexpr double kScaleMax = 1e300;

double guard(double x) { return std::clamp(x, kScaleMin, kScaleMax); }

double floored_abs(double beta) { return std::max(std::abs(beta), kBetaFloor); }

bool all_finite(const VectorXd& v) { return v.allFinite(); }

}  // namespace

namespace conditional {

double laplace_tau2(double beta, double lambda2, Rng& rng) {
  const double mu = std::sqrt(lambda2) / floored_abs(beta);
  return guard(1.0 / draw_inverse_gaussian(rng, mu, lambda2));
}

double laplace_lambda2(const VectorXd& tau2, const LaplacePrior& prior, Rng& rng) {
  const double shape = prior.a + static_cast<double>(tau2.size());
  const double rate = prior.b + 0.5 * tau2.sum();
  return guard(draw_gamma(rng, shape, std::min(rate, kScaleMax)));
}

double horseshoe_u2(double beta, double lambda2, double xi, Rng& rng) {
  const double b = floored_abs(beta);
  const double rate = 1.0 / xi + b * b / (2.0 * lambda2);
  return guard(draw_inv_gamma(rng, 1.0, std::min(rate, kScaleMax)));
}

double horseshoe_xi(double u2, Rng& rng) {
  return guard(draw_inv_gamma(rng, 1.0, std::min(1.0 + 1.0 / u2, kScaleMax)));
}

double horseshoe_lambda2(const VectorXd& beta, const VectorXd& u2, double gamma, Rng& rng) {
  double ss = 0.0;
  for (Index k = 0; k < beta.size(); ++k) {
    const double b = floored_abs(beta[k]);
    ss += b * b / u2[k];
  }
  const double shape = 0.5 * (static_cast<double>(beta.size()) + 1.0);
  const double rate = 1.0 / gamma + 0.5 * ss;
  return guard(draw_inv_gamma(rng, shape, std::min(rate, kScaleMax)));
}

double horseshoe_gamma(double lambda2, Rng& rng) {
  return guard(draw_inv_gamma(rng, 1.0, std::min(1.0 + 1.0 / lambda2, kScaleMax)));
}

}  // namespace conditional

void McmcConfig::validate() const {
  if (n_draws < 1) config_error("mcmc n_draws must be >= 1");
  if (burn_in < 0) config_error("mcmc burn_in must be >= 0");
  if (thin < 1) config_error("mcmc thin must be >= 1");
}

void McmcState::validate() const {
  if (!all_finite(beta)) numerical_error("MCMC state has non-finite coefficients");
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!positive(lambda2) || !positive(gamma_aux)) numerical_error("MCMC global scale is not positive and finite");
  for (Index k = 0; k < local2.size(); ++k) {
    if (!positive(local2[k])) numerical_error("MCMC local scale is not positive and finite");
  }
  for (Index k = 0; k < xi.size(); ++k) {
    if (!positive(xi[k])) numerical_error("MCMC auxiliary scale is not positive and finite");
  }
}

CoefficientLikelihood CoefficientLikelihood::from_fit(const RegressionFit& fit) {
  CoefficientLikelihood out;
  out.estimate = fit.beta1;
  out.covariance = fit.vbeta11();
  out.shrink.assign(static_cast<std::size_t>(fit.beta1.size()), true);
  return out;
}

ShrinkageSampler::ShrinkageSampler(CoefficientLikelihood likelihood)
    : estimate_(std::move(likelihood.estimate)), shrink_(std::move(likelihood.shrink)) {
  const Index p = estimate_.size();
  MatrixXd cov = std::move(likelihood.covariance);
  if (cov.rows() != p || cov.cols() != p) data_error("coefficient covariance has wrong dimension");
  if (!all_finite(estimate_) || !cov.allFinite()) numerical_error("coefficient likelihood is not finite");
  if (shrink_.empty()) shrink_.assign(static_cast<std::size_t>(p), true);
  if (static_cast<Index>(shrink_.size()) != p) data_error("shrink mask has wrong length");
  num_shrunk_ = static_cast<Index>(std::count(shrink_.begin(), shrink_.end(), true));
  if (p == 0) {
    precision_.resize(0, 0);
    precision_estimate_.resize(0);
    cov_factor_.resize(0, 0);
    return;
  }

  cov = 0.5 * (cov + cov.transpose());
  double scale = cov.trace() / static_cast<double>(p);
  if (!(scale > 0.0)) scale = 1e-8;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < 1e-10 * scale) {
    jitter_ = 1e-8 * scale;
    cov.diagonal().array() += jitter_;
  }
  Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) numerical_error("coefficient covariance factorization failed after jitter");
  cov_factor_ = llt.matrixL();
  precision_ = llt.solve(MatrixXd::Identity(p, p));
  precision_ = 0.5 * (precision_ + precision_.transpose());
  precision_estimate_ = precision_ * estimate_;
}

VectorXd ShrinkageSampler::draw_flat(Rng& rng) const {
  VectorXd z(dim());
  for (Index k = 0; k < z.size(); ++k) z[k] = draw_normal(rng);
  return estimate_ + cov_factor_ * z;
}

VectorXd ShrinkageSampler::draw_conditional_beta(const VectorXd& prior_var, Rng& rng) const {
  const Index p = dim();
  if (prior_var.size() != p) data_error("prior variance vector has wrong length");
  MatrixXd a = precision_;
  for (Index k = 0; k < p; ++k) {
    if (shrinks(k)) a(k, k) += 1.0 / guard(prior_var[k]);
  }
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) numerical_error("conditional precision is not positive definite");
  VectorXd z(p);
  for (Index k = 0; k < p; ++k) z[k] = draw_normal(rng);
  // A = L L'; L'^{-1} z has covariance A^{-1}.
  return llt.solve(precision_estimate_) + llt.matrixU().solve(z);
}

McmcState ShrinkageSampler::initial_state(const PriorSpec& prior) const {
  McmcState s;
  s.beta = estimate_;
  s.local2 = VectorXd::Ones(dim());
  s.lambda2 = 1.0;
  if (const auto* lap = std::get_if<LaplacePrior>(&prior)) {
    if (!(lap->a > 0.0) || !(lap->b > 0.0)) config_error("Laplace prior needs a > 0 and b > 0");
    if (lap->fixed_lambda2) {
      if (!(*lap->fixed_lambda2 > 0.0)) config_error("fixed lambda^2 must be positive");
      s.lambda2 = *lap->fixed_lambda2;
    }
  } else if (std::holds_alternative<HorseshoePrior>(prior)) {
    s.xi = VectorXd::Ones(dim());
  }
  return s;
}

void ShrinkageSampler::step_laplace(McmcState& state, const LaplacePrior& prior, Rng& rng) const {
  state.beta = draw_conditional_beta(state.local2, rng);
  VectorXd shrunk_tau2(num_shrunk_);
  Index m = 0;
  for (Index k = 0; k < dim(); ++k) {
    if (!shrinks(k)) continue;
    state.local2[k] = conditional::laplace_tau2(state.beta[k], state.lambda2, rng);
    shrunk_tau2[m++] = state.local2[k];
  }
  state.lambda2 = prior.fixed_lambda2 ? *prior.fixed_lambda2
                                      : conditional::laplace_lambda2(shrunk_tau2, prior, rng);
}

void ShrinkageSampler::step_horseshoe(McmcState& state, Rng& rng) const {
  if (state.xi.size() != dim()) state.xi = VectorXd::Ones(dim());
  state.beta = draw_conditional_beta(state.lambda2 * state.local2, rng);
  for (Index k = 0; k < dim(); ++k) {
    if (shrinks(k)) state.local2[k] = conditional::horseshoe_u2(state.beta[k], state.lambda2, state.xi[k], rng);
  }
  for (Index k = 0; k < dim(); ++k) {
    if (shrinks(k)) state.xi[k] = conditional::horseshoe_xi(state.local2[k], rng);
  }
  VectorXd b(num_shrunk_), u2(num_shrunk_);
  Index m = 0;
  for (Index k = 0; k < dim(); ++k) {
    if (!shrinks(k)) continue;
    b[m] = state.beta[k];
    u2[m] = state.local2[k];
    ++m;
  }
  state.lambda2 = conditional::horseshoe_lambda2(b, u2, state.gamma_aux, rng);
  state.gamma_aux = conditional::horseshoe_gamma(state.lambda2, rng);
}

VectorXd sample_beta_flat(const RegressionFit& fit, Rng& rng) {
  return ShrinkageSampler(CoefficientLikelihood::from_fit(fit)).draw_flat(rng);
}

McmcState gibbs_step_laplace(const McmcState& state, const RegressionFit& fit,
                             const LaplacePrior& prior, Rng& rng) {
  state.validate();
  McmcState next = state;
  ShrinkageSampler(CoefficientLikelihood::from_fit(fit)).step_laplace(next, prior, rng);
  return next;
}

McmcState gibbs_step_horseshoe(const McmcState& state, const RegressionFit& fit, Rng& rng) {
  state.validate();
  McmcState next = state;
  ShrinkageSampler(CoefficientLikelihood::from_fit(fit)).step_horseshoe(next, rng);
  return next;
}

}  // namespace abgreg
