#include <cmath>
#include <string>

#include "abgreg/error.hpp"
#include "abgreg/survey.hpp"

namespace abgreg {

namespace {

// Off-diagonal joint probability shared by every pair under ExactSrs.
double exact_srs_joint(const Sample& sample) {
  const double n = static_cast<double>(sample.size());
  const double N = sample.pop_size();
  const double joint = n * (n - 1.0) / (N * (N - 1.0));
  if (!(joint > 0.0)) numerical_error("joint inclusion probability is zero for a sampled pair");
  return joint;
}

void require_two_units(const Sample& sample) {
  if (sample.size() < 2) numerical_error("design variance requires at least two sampled units");
}

}  // namespace

// Diagonal: Delta_ii / pi_ii = 1 - pi_i.
// ExactSrs off-diagonal: 1 - pi_i pi_j / c, so the double sum splits into
//   sum (1-pi_i) a_i^2 + [S^2 - sum a_i^2] - [T^2 - sum (pi_i a_i)^2] / c
// with S = sum a_i, T = sum pi_i a_i.
// IndependenceProduct off-diagonal terms vanish.
double pairwise_quadratic_form(const Sample& sample, const VectorXd& a) {
  require_two_units(sample);
  if (a.size() != sample.size()) data_error("quadratic form length differs from sample size");
  const VectorXd& pi = sample.pi();
  const double diag = (VectorXd::Ones(a.size()) - pi).dot(a.cwiseAbs2());
  if (sample.pairwise() == PairwisePolicy::IndependenceProduct) return diag;

  const double c = exact_srs_joint(sample);
  const VectorXd pa = pi.cwiseProduct(a);
  const double s = a.sum();
  const double t = pa.sum();
  return diag + (s * s - a.squaredNorm()) - (t * t - pa.squaredNorm()) / c;
}

MatrixXd pairwise_outer_sum(const Sample& sample, const MatrixXd& g) {
  require_two_units(sample);
  if (g.rows() != sample.size()) data_error("outer-sum row count differs from sample size");
  const VectorXd& pi = sample.pi();
  const VectorXd one_minus = VectorXd::Ones(pi.size()) - pi;
  MatrixXd out = g.transpose() * one_minus.asDiagonal() * g;
  if (sample.pairwise() == PairwisePolicy::ExactSrs) {
    const double c = exact_srs_joint(sample);
    const VectorXd s = g.colwise().sum().transpose();
    const MatrixXd pg = pi.asDiagonal() * g;
    const VectorXd t = pg.colwise().sum().transpose();
    out += s * s.transpose() - g.transpose() * g;
    out -= (t * t.transpose() - pg.transpose() * pg) / c;
  }
  return 0.5 * (out + out.transpose());
}

double variance_e(const Sample& sample, const VectorXd& beta1, ResidualConvention convention) {
  if (beta1.size() != sample.num_aux()) data_error("variance_e: coefficient dimension mismatch");
  VectorXd e = sample.y() - sample.x() * beta1;
  if (convention == ResidualConvention::InterceptAbsorbed) {
    const VectorXd w = sample.weights();
    e.array() -= w.dot(e) / w.sum();
  }
  const double N = sample.pop_size();
  return pairwise_quadratic_form(sample, e.cwiseQuotient(sample.pi())) / (N * N);
}

double ht_variance(const Sample& sample) {
  VectorXd e = sample.y();
  e.array() -= hajek_mean(sample);
  const double N = sample.pop_size();
  return pairwise_quadratic_form(sample, e.cwiseQuotient(sample.pi())) / (N * N);
}

DomainEstimate domain_greg(const Sample& sample, int domain_id, const DomainAux& aux,
                           double beta0_h, const VectorXd& beta1) {
  if (!sample.has_domain()) data_error("domain estimation requires domain labels");
  if (!(aux.pop_size > 0.0)) data_error("unknown population size for domain " + std::to_string(domain_id));
  if (beta1.size() != sample.num_aux() || aux.xbar.size() != sample.num_aux()) {
    data_error("domain_greg: coefficient or auxiliary-mean dimension mismatch");
  }
  const Index n = sample.size();
  VectorXd a = VectorXd::Zero(n);
  Index n_h = 0;
  for (Index i = 0; i < n; ++i) {
    if (sample.domain()[i] != domain_id) continue;
    const double e = sample.y()[i] - beta0_h - sample.x().row(i).dot(beta1);
    a[i] = e / sample.pi()[i];
    ++n_h;
  }
  if (n_h == 0) data_error("domain " + std::to_string(domain_id) + " has no sampled units");
  DomainEstimate out;
  out.estimate = beta0_h + aux.xbar.dot(beta1) + a.sum() / aux.pop_size;
  out.variance = pairwise_quadratic_form(sample, a) / (aux.pop_size * aux.pop_size);
  return out;
}

}  // namespace abgreg
