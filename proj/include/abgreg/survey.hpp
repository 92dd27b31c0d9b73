#ifndef ABGREG_SURVEY_HPP_
#define ABGREG_SURVEY_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

namespace abgreg {

using Index = Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Unit-level finite population: response y, auxiliaries x (no intercept
// column), optional domain labels and PPS size measure.
class FinitePopulation {
 public:
  FinitePopulation(VectorXd y, MatrixXd x, std::vector<int> domain = {},
                   VectorXd size_measure = {});

  Index size() const { return y_.size(); }
  Index num_aux() const { return x_.cols(); }

  const VectorXd& y() const { return y_; }
  const MatrixXd& x() const { return x_; }
  const std::vector<int>& domain() const { return domain_; }
  const VectorXd& size_measure() const { return size_measure_; }
  bool has_domain() const { return !domain_.empty(); }
  bool has_size_measure() const { return size_measure_.size() > 0; }

  double mean_y() const { return y_.mean(); }
  VectorXd mean_x() const { return x_.colwise().mean().transpose(); }

  FinitePopulation with_size_measure(VectorXd z) const;
  // Keeps the first `p` auxiliary columns.
  FinitePopulation leading_columns(Index p) const;

 private:
  VectorXd y_;
  MatrixXd x_;
  std::vector<int> domain_;
  VectorXd size_measure_;
};

// Second-order inclusion probability policy used by every design variance.
//   ExactSrs:            pi_ij = n(n-1) / (N(N-1)) for i != j
//   IndependenceProduct: pi_ij = pi_i pi_j          for i != j
// Diagonal terms always use pi_ii = pi_i.
enum class PairwisePolicy { ExactSrs, IndependenceProduct };

struct SrsDesign {
  Index n = 0;
};

// Fixed-size PPS: pi_i = n z_i / sum(z) with iterative capping at one, units
// selected by systematic sampling over a random permutation of the frame.
struct PpsDesign {
  Index n = 0;
};

struct DesignSpec {
  std::variant<SrsDesign, PpsDesign> scheme;
  PairwisePolicy pairwise = PairwisePolicy::ExactSrs;

  Index sample_size() const;
  static DesignSpec srs(Index n) { return {SrsDesign{n}, PairwisePolicy::ExactSrs}; }
  static DesignSpec pps(Index n) { return {PpsDesign{n}, PairwisePolicy::IndependenceProduct}; }
};

class Sample {
 public:
  Sample(std::vector<Index> indices, VectorXd y, MatrixXd x, VectorXd pi,
         PairwisePolicy pairwise, double pop_size, std::vector<int> domain = {});

  Index size() const { return y_.size(); }
  Index num_aux() const { return x_.cols(); }

  const std::vector<Index>& indices() const { return indices_; }
  const VectorXd& y() const { return y_; }
  const MatrixXd& x() const { return x_; }
  const VectorXd& pi() const { return pi_; }
  // Design weights 1 / pi_i.
  VectorXd weights() const { return pi_.cwiseInverse(); }
  PairwisePolicy pairwise() const { return pairwise_; }
  double pop_size() const { return pop_size_; }
  const std::vector<int>& domain() const { return domain_; }
  bool has_domain() const { return !domain_.empty(); }

  // Same units, auxiliaries restricted to `columns` (in the given order).
  Sample select_columns(const std::vector<Index>& columns) const;
  Sample with_response(VectorXd y) const;

 private:
  std::vector<Index> indices_;
  VectorXd y_;
  MatrixXd x_;
  VectorXd pi_;
  PairwisePolicy pairwise_;
  double pop_size_;
  std::vector<int> domain_;
};

// Known population means of the auxiliaries; unit-level covariates are only
// needed by the nonlinear (working-model) estimators.
struct AuxTotals {
  VectorXd xbar;
  std::optional<MatrixXd> pop_x;

  static AuxTotals from_population(const FinitePopulation& pop, bool keep_units = false);
};

// Per-domain auxiliary information.
struct DomainAux {
  double pop_size = 0.0;
  VectorXd xbar;
};

struct DomainEstimate {
  double estimate = 0.0;
  double variance = 0.0;
};

// Residual convention for variance_e.
//   InterceptAbsorbed: e_i = y_i - b0 - x_i' beta1, b0 the Hajek mean of y - x' beta1
//   Raw:               e_i = y_i - x_i' beta1
enum class ResidualConvention { InterceptAbsorbed, Raw };

// First-order inclusion probabilities for every unit of the frame.
VectorXd inclusion_probabilities(const FinitePopulation& pop, const DesignSpec& design);

Sample draw_sample(const FinitePopulation& pop, const DesignSpec& design, std::uint64_t seed);

double pairwise_probability(const Sample& sample, Index i, Index j);

double ht_mean(const Sample& sample);
double hajek_mean(const Sample& sample);
double greg_mean(const Sample& sample, const AuxTotals& aux, const VectorXd& beta1);

// sum_{i,j in A} (Delta_ij / pi_ij) a_i a_j, diagonal included. Evaluated in
// O(n) using the structure of the pairwise policy.
double pairwise_quadratic_form(const Sample& sample, const VectorXd& a);
// Matrix analogue: sum_{i,j} (Delta_ij / pi_ij) g_i g_j' where g_i is row i.
MatrixXd pairwise_outer_sum(const Sample& sample, const MatrixXd& g);

double variance_e(const Sample& sample, const VectorXd& beta1,
                  ResidualConvention convention = ResidualConvention::InterceptAbsorbed);
// Variance of the HT mean, computed on Hajek-centered responses.
double ht_variance(const Sample& sample);

DomainEstimate domain_greg(const Sample& sample, int domain_id, const DomainAux& aux,
                           double beta0_h, const VectorXd& beta1);

}  // namespace abgreg

#endif  // ABGREG_SURVEY_HPP_
