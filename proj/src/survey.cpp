#include "abgreg/survey.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "abgreg/error.hpp"
#include "abgreg/rng.hpp"

namespace abgreg {

FinitePopulation::FinitePopulation(VectorXd y, MatrixXd x, std::vector<int> domain,
                                   VectorXd size_measure)
    : y_(std::move(y)),
      x_(std::move(x)),
      domain_(std::move(domain)),
      size_measure_(std::move(size_measure)) {
  if (y_.size() < 1) data_error("finite population must contain at least one unit");
  if (x_.rows() != y_.size()) data_error("auxiliary matrix row count differs from N");
  if (!domain_.empty() && static_cast<Index>(domain_.size()) != y_.size()) {
    data_error("domain label count differs from N");
  }
  if (size_measure_.size() > 0) {
    if (size_measure_.size() != y_.size()) data_error("size measure length differs from N");
    for (Index i = 0; i < size_measure_.size(); ++i) {
      if (!(size_measure_[i] > 0.0) || !std::isfinite(size_measure_[i])) {
        data_error("size measure must be strictly positive (unit " + std::to_string(i) + ")");
      }
    }
  }
}

FinitePopulation FinitePopulation::with_size_measure(VectorXd z) const {
  return FinitePopulation(y_, x_, domain_, std::move(z));
}

FinitePopulation FinitePopulation::leading_columns(Index p) const {
  if (p < 0 || p > x_.cols()) config_error("requested more auxiliary columns than available");
  return FinitePopulation(y_, x_.leftCols(p), domain_, size_measure_);
}

Index DesignSpec::sample_size() const {
  return std::visit([](const auto& d) { return d.n; }, scheme);
}

Sample::Sample(std::vector<Index> indices, VectorXd y, MatrixXd x, VectorXd pi,
               PairwisePolicy pairwise, double pop_size, std::vector<int> domain)
    : indices_(std::move(indices)),
      y_(std::move(y)),
      x_(std::move(x)),
      pi_(std::move(pi)),
      pairwise_(pairwise),
      pop_size_(pop_size),
      domain_(std::move(domain)) {
  const Index n = y_.size();
  if (n < 1) data_error("sample must contain at least one unit");
  if (x_.rows() != n || pi_.size() != n || static_cast<Index>(indices_.size()) != n) {
    data_error("sample component lengths are inconsistent");
  }
  if (!domain_.empty() && static_cast<Index>(domain_.size()) != n) {
    data_error("sample domain label count differs from n");
  }
  for (Index i = 0; i < n; ++i) {
    if (!(pi_[i] > 0.0 && pi_[i] <= 1.0)) {
      data_error("inclusion probability outside (0, 1] at sample position " + std::to_string(i));
    }
  }
  std::vector<Index> sorted = indices_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    data_error("sample indices are not distinct");
  }
  if (!(pop_size_ >= static_cast<double>(n))) data_error("population size smaller than sample size");
}

Sample Sample::select_columns(const std::vector<Index>& columns) const {
  MatrixXd xs(size(), static_cast<Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (columns[k] < 0 || columns[k] >= num_aux()) config_error("column index out of range");
    xs.col(static_cast<Index>(k)) = x_.col(columns[k]);
  }
  return Sample(indices_, y_, std::move(xs), pi_, pairwise_, pop_size_, domain_);
}

Sample Sample::with_response(VectorXd y) const {
  return Sample(indices_, std::move(y), x_, pi_, pairwise_, pop_size_, domain_);
}

AuxTotals AuxTotals::from_population(const FinitePopulation& pop, bool keep_units) {
  AuxTotals aux;
  aux.xbar = pop.mean_x();
  if (keep_units) aux.pop_x = pop.x();
  return aux;
}

namespace {

VectorXd pps_probabilities(const VectorXd& z, Index n) {
  const Index N = z.size();
  VectorXd pi = VectorXd::Zero(N);
  std::vector<char> capped(static_cast<std::size_t>(N), 0);
  Index n_capped = 0;
  for (Index iter = 0; iter <= N; ++iter) {
    double z_free = 0.0;
    for (Index i = 0; i < N; ++i) {
      if (!capped[i]) z_free += z[i];
    }
    const double n_free = static_cast<double>(n - n_capped);
    bool new_cap = false;
    for (Index i = 0; i < N; ++i) {
      if (capped[i]) continue;
      pi[i] = n_free > 0.0 ? n_free * z[i] / z_free : 0.0;
      if (pi[i] > 1.0) {
        capped[i] = 1;
        pi[i] = 1.0;
        ++n_capped;
        new_cap = true;
      }
    }
    if (!new_cap) return pi;
  }
  numerical_error("PPS capping of inclusion probabilities did not converge");
}

}  // namespace

VectorXd inclusion_probabilities(const FinitePopulation& pop, const DesignSpec& design) {
  const Index N = pop.size();
  const Index n = design.sample_size();
  if (n < 1) config_error("sample size must be at least 1");
  if (n > N) config_error("sample size exceeds population size");
  if (std::holds_alternative<SrsDesign>(design.scheme)) {
    return VectorXd::Constant(N, static_cast<double>(n) / static_cast<double>(N));
  }
  if (!pop.has_size_measure()) config_error("PPS design requires a size measure");
  return pps_probabilities(pop.size_measure(), n);
}

Sample draw_sample(const FinitePopulation& pop, const DesignSpec& design, std::uint64_t seed) {
  const VectorXd pi_all = inclusion_probabilities(pop, design);
  const Index N = pop.size();
  const Index n = design.sample_size();
  Rng rng = make_rng(seed);

  std::vector<Index> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), Index{0});
  std::vector<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(n));

  if (std::holds_alternative<SrsDesign>(design.scheme)) {
    for (Index k = 0; k < n; ++k) {
      std::uniform_int_distribution<Index> pick(k, N - 1);
      std::swap(order[k], order[pick(rng)]);
    }
    chosen.assign(order.begin(), order.begin() + n);
  } else {
    std::shuffle(order.begin(), order.end(), rng);
    // Systematic selection over the permuted frame. Cumulative sums are
    // rescaled so the last one is exactly n.
    long double total = 0.0L;
    for (Index i = 0; i < N; ++i) total += pi_all[order[i]];
    const long double rescale = static_cast<long double>(n) / total;
    const long double start = draw_uniform(rng);
    long double cum = 0.0L;
    Index next = 0;
    for (Index pos = 0; pos < N && next < n; ++pos) {
      cum += pi_all[order[pos]] * rescale;
      if (start + static_cast<long double>(next) < cum) {
        chosen.push_back(order[pos]);
        ++next;
      }
    }
    if (static_cast<Index>(chosen.size()) != n) {
      numerical_error("systematic PPS selection returned the wrong sample size");
    }
  }
  std::sort(chosen.begin(), chosen.end());

  VectorXd y(n), pi(n);
  MatrixXd x(n, pop.num_aux());
  std::vector<int> domain;
  if (pop.has_domain()) domain.resize(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) {
    const Index u = chosen[k];
    y[k] = pop.y()[u];
    x.row(k) = pop.x().row(u);
    pi[k] = pi_all[u];
    if (pop.has_domain()) domain[k] = pop.domain()[u];
  }
  return Sample(std::move(chosen), std::move(y), std::move(x), std::move(pi), design.pairwise,
                static_cast<double>(N), std::move(domain));
}

double pairwise_probability(const Sample& sample, Index i, Index j) {
  const Index n = sample.size();
  if (i < 0 || j < 0 || i >= n || j >= n) config_error("pairwise probability index out of range");
  const VectorXd& pi = sample.pi();
  if (i == j) return pi[i];
  if (sample.pairwise() == PairwisePolicy::IndependenceProduct) return pi[i] * pi[j];
  const double nn = static_cast<double>(n);
  const double N = sample.pop_size();
  return nn * (nn - 1.0) / (N * (N - 1.0));
}

double ht_mean(const Sample& sample) {
  return sample.y().cwiseQuotient(sample.pi()).sum() / sample.pop_size();
}

double hajek_mean(const Sample& sample) {
  const VectorXd w = sample.weights();
  return w.dot(sample.y()) / w.sum();
}

double greg_mean(const Sample& sample, const AuxTotals& aux, const VectorXd& beta1) {
  if (beta1.size() != sample.num_aux() || aux.xbar.size() != sample.num_aux()) {
    data_error("greg_mean: coefficient or auxiliary-mean dimension mismatch");
  }
  const VectorXd w = sample.weights();
  const VectorXd resid = sample.y() - sample.x() * beta1;
  return aux.xbar.dot(beta1) + w.dot(resid) / w.sum();
}

}  // namespace abgreg
