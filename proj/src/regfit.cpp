#include "abgreg/regfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "abgreg/error.hpp"
#include "abgreg/rng.hpp"
#include "penalized_problem.hpp"

namespace abgreg {

VectorXd RegressionFit::coefficients() const {
  VectorXd out(beta1.size() + 1);
  out << beta0, beta1;
  return out;
}

namespace {

MatrixXd with_intercept(const MatrixXd& x) {
  MatrixXd z(x.rows(), x.cols() + 1);
  z.col(0).setOnes();
  z.rightCols(x.cols()) = x;
  return z;
}

}  // namespace

RegressionFit fit_wls(const Sample& sample) {
  const Index n = sample.size();
  const Index p = sample.num_aux();
  if (n <= p + 1) {
    data_error("fit_wls needs n > p + 1 (n = " + std::to_string(n) + ", p = " + std::to_string(p) + ")");
  }
  const VectorXd w = sample.weights();
  const MatrixXd z = with_intercept(sample.x());

  const MatrixXd sqrt_wz = w.cwiseSqrt().asDiagonal() * z;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(sqrt_wz);
  if (qr.rank() < p + 1) numerical_error("weighted design matrix is rank deficient");

  MatrixXd normal = z.transpose() * w.asDiagonal() * z;
  RegressionFit fit;
  const double avg_diag = normal.trace() / static_cast<double>(p + 1);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(normal, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < 1e-10 * avg_diag) {
    fit.jitter = 1e-10 * avg_diag;
    normal.diagonal().array() += fit.jitter;
  }
  Eigen::LLT<MatrixXd> llt(normal);
  if (llt.info() != Eigen::Success) numerical_error("weighted normal matrix is not positive definite");

  const VectorXd coef = llt.solve(z.transpose() * w.cwiseProduct(sample.y()));
  fit.beta0 = coef[0];
  fit.beta1 = coef.tail(p);
  fit.residuals = sample.y() - z * coef;

  // Sandwich: G^{-1} [sum_ij (Delta_ij/pi_ij) g_i g_j'] G^{-1}, g_i = e_i z_i / pi_i.
  const MatrixXd g = fit.residuals.cwiseQuotient(sample.pi()).asDiagonal() * z;
  const MatrixXd middle = pairwise_outer_sum(sample, g);
  const MatrixXd normal_inv = llt.solve(MatrixXd::Identity(p + 1, p + 1));
  const MatrixXd v = normal_inv * middle * normal_inv;
  fit.vbeta = 0.5 * (v + v.transpose());
  return fit;
}

std::vector<double> lambda_grid(const Sample& sample, const PenaltyFamily& family, int count,
                                double ratio, bool standardize) {
  if (count < 1) config_error("lambda grid needs at least one point");
  if (!(ratio > 0.0 && ratio < 1.0)) config_error("lambda grid ratio must lie in (0, 1)");
  const double top = lambda_max(sample.x(), sample.y(), sample.weights(), family, standardize);
  std::vector<double> grid(static_cast<std::size_t>(count));
  if (count == 1 || !(top > 0.0)) {
    std::fill(grid.begin(), grid.end(), std::max(top, 0.0));
    return grid;
  }
  const double step = std::log(ratio) / static_cast<double>(count - 1);
  for (int k = 0; k < count; ++k) grid[k] = top * std::exp(step * k);
  return grid;
}

std::vector<int> assign_folds(Index n, int folds, std::uint64_t seed) {
  if (folds < 2) config_error("cross-validation needs at least two folds");
  if (n / folds < 2) data_error("cross-validation fold would hold fewer than two observations");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng = make_rng(seed, 0xCF);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> label(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) label[perm[k]] = static_cast<int>(k % folds);
  return label;
}

CvResult cv_select_lambda(const Sample& sample, const PenaltyFamily& family, int folds,
                          const std::vector<double>& grid, std::uint64_t seed,
                          const CvOptions& options) {
  if (grid.empty()) config_error("cross-validation grid is empty");
  if (!std::is_sorted(grid.begin(), grid.end(), std::greater<>())) {
    config_error("cross-validation grid must be sorted in descending order");
  }
  const Index n = sample.size();
  const std::vector<int> label = assign_folds(n, folds, seed);
  const VectorXd w = sample.weights();
  const std::size_t G = grid.size();

  // errors[f][g], reduced over folds in fold order.
  std::vector<std::vector<double>> errors(static_cast<std::size_t>(folds), std::vector<double>(G));
  for (int f = 0; f < folds; ++f) {
    std::vector<Index> train, test;
    for (Index i = 0; i < n; ++i) (label[i] == f ? test : train).push_back(i);
    const auto nt = static_cast<Index>(train.size());
    MatrixXd xt(nt, sample.num_aux());
    VectorXd yt(nt), wt(nt);
    for (Index k = 0; k < nt; ++k) {
      xt.row(k) = sample.x().row(train[k]);
      yt[k] = sample.y()[train[k]];
      wt[k] = w[train[k]];
    }
    detail::PenalizedProblem problem(xt, yt, wt, options.fit.standardize);
    PenalizedFit prev;
    bool have_prev = false;
    for (std::size_t g = 0; g < G; ++g) {
      PenalizedFit fit = problem.solve(family.at(grid[g]), options.fit, have_prev ? &prev : nullptr);
      double loss = 0.0, norm = 0.0;
      for (Index i : test) {
        const double e = sample.y()[i] - fit.beta0 - sample.x().row(i).dot(fit.beta1);
        const double wi = options.weighted_loss ? w[i] : 1.0;
        loss += wi * e * e;
        norm += wi;
      }
      errors[f][g] = loss / norm;
      prev = std::move(fit);
      have_prev = true;
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

namespace {

// Weighted centered cross-products, computed once for forward selection.
struct CenteredGram {
  MatrixXd xx;
  VectorXd xy;
  double tss = 0.0;
  Index n = 0;

  CenteredGram(const Sample& sample, bool weighted) : n(sample.size()) {
    const VectorXd w = weighted ? sample.weights() : VectorXd::Ones(sample.size());
    const double ws = w.sum();
    const VectorXd xm = sample.x().transpose() * w / ws;
    const double ym = w.dot(sample.y()) / ws;
    const MatrixXd xc = sample.x().rowwise() - xm.transpose();
    const VectorXd yc = sample.y().array() - ym;
    xx = xc.transpose() * w.asDiagonal() * xc;
    xy = xc.transpose() * w.cwiseProduct(yc);
    tss = w.dot(yc.cwiseAbs2());
  }

  // Adjusted R^2 for the given columns; NaN when not estimable.
  double adjusted(const std::vector<Index>& cols) const {
    const auto k = static_cast<Index>(cols.size());
    if (n - k - 1 <= 0) return std::numeric_limits<double>::quiet_NaN();
    if (!(tss > 0.0)) return 0.0;
    double rss = tss;
    if (k > 0) {
      MatrixXd a(k, k);
      VectorXd b(k);
      for (Index r = 0; r < k; ++r) {
        b[r] = xy[cols[r]];
        for (Index c = 0; c < k; ++c) a(r, c) = xx(cols[r], cols[c]);
      }
      Eigen::LDLT<MatrixXd> ldlt(a);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
          ldlt.vectorD().minCoeff() <= 1e-12 * std::max(a.diagonal().maxCoeff(), 1e-300)) {
        return std::numeric_limits<double>::quiet_NaN();
      }
      rss = std::max(0.0, tss - b.dot(ldlt.solve(b)));
    }
    const double nn = static_cast<double>(n);
    return 1.0 - (rss / tss) * (nn - 1.0) / (nn - static_cast<double>(k) - 1.0);
  }
};

}  // namespace

double adjusted_r2(const Sample& sample, const std::vector<Index>& columns, bool weighted) {
  return CenteredGram(sample, weighted).adjusted(columns);
}

VectorXd ForwardSelection::full_beta1(Index p) const {
  VectorXd out = VectorXd::Zero(p);
  for (std::size_t k = 0; k < selected.size(); ++k) out[selected[k]] = fit.beta1[static_cast<Index>(k)];
  return out;
}

ForwardSelection forward_select(const Sample& sample, bool weighted) {
  const Index n = sample.size();
  const Index p = sample.num_aux();
  if (n <= 2) data_error("forward selection needs n > 2");
  const CenteredGram gram(sample, weighted);

  ForwardSelection out;
  std::vector<char> used(static_cast<std::size_t>(p), 0);
  double current = 0.0;  // intercept-only model
  while (true) {
    Index best_col = -1;
    double best = current;
    std::vector<Index> trial = out.selected;
    trial.push_back(0);
    for (Index j = 0; j < p; ++j) {
      if (used[j]) continue;
      trial.back() = j;
      if (static_cast<Index>(trial.size()) + 1 >= n) break;
      const double adj = gram.adjusted(trial);
      if (std::isnan(adj)) continue;
      if (adj > best + 1e-12) {
        best = adj;
        best_col = j;
      }
    }
    if (best_col < 0) break;
    out.selected.push_back(best_col);
    used[best_col] = 1;
    current = best;
  }
  out.adjusted_r2 = current;
  out.fit = fit_wls(sample.select_columns(out.selected));
  return out;
}

}  // namespace abgreg
