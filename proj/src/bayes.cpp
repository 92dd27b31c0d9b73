#include "abgreg/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "abgreg/error.hpp"

namespace abgreg {

double sample_ybar(const Sample& sample, const AuxTotals& aux, const VectorXd& beta1, Rng& rng) {
  const double mean = greg_mean(sample, aux, beta1);
  const double var = variance_e(sample, beta1);
  if (var < 0.0) numerical_error("negative design variance; check the pairwise policy");
  if (var == 0.0) return mean;
  return mean + std::sqrt(var) * draw_normal(rng);
}

PosteriorDraws run_chain(const CoefficientLikelihood& likelihood, const PriorSpec& prior,
                         const McmcConfig& config, const YbarDraw& ybar_draw) {
  config.validate();
  const ShrinkageSampler sampler(likelihood);
  Rng beta_rng = make_rng(config.seed, 1);
  Rng ybar_rng = make_rng(config.seed, 2);

  PosteriorDraws out;
  out.config = config;
  out.beta.resize(config.n_draws, sampler.dim());
  out.ybar.resize(config.n_draws);
  const bool flat = std::holds_alternative<FlatPrior>(prior);
  if (!flat) out.lambda.resize(config.n_draws);

  auto record = [&](int k, const VectorXd& beta, double lambda2) {
    out.beta.row(k) = beta.transpose();
    if (!flat) out.lambda[k] = std::sqrt(lambda2);
    out.ybar[k] = ybar_draw(beta, ybar_rng);
    if (!std::isfinite(out.ybar[k]) || !beta.allFinite()) numerical_error("posterior draw is not finite");
  };

  if (flat) {
    for (int k = 0; k < config.n_draws; ++k) record(k, sampler.draw_flat(beta_rng), 0.0);
    return out;
  }

  McmcState state = sampler.initial_state(prior);
  auto step = [&]() {
    if (const auto* lap = std::get_if<LaplacePrior>(&prior)) {
      sampler.step_laplace(state, *lap, beta_rng);
    } else {
      sampler.step_horseshoe(state, beta_rng);
    }
  };
  for (int it = 0; it < config.burn_in; ++it) step();
  for (int k = 0; k < config.n_draws; ++k) {
    for (int t = 0; t < config.thin; ++t) step();
    record(k, state.beta, state.lambda2);
  }
  return out;
}

PosteriorDraws run_posterior(const Sample& sample, const AuxTotals& aux, const PriorSpec& prior,
                             const McmcConfig& config) {
  const RegressionFit fit = fit_wls(sample);
  return run_chain(CoefficientLikelihood::from_fit(fit), prior, config,
                   [&](const VectorXd& beta, Rng& rng) { return sample_ybar(sample, aux, beta, rng); });
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) data_error("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) config_error("quantile level must lie in [0, 1]");
  const double h = static_cast<double>(sorted.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double posterior_mean(const PosteriorDraws& draws) {
  if (draws.ybar.size() == 0) data_error("no posterior draws");
  return draws.ybar.mean();
}

PosteriorSummary summarize(const PosteriorDraws& draws, double level) {
  if (!(level > 0.0 && level < 1.0)) config_error("interval level must lie in (0, 1)");
  if (draws.ybar.size() < 100) {
    data_error("credible intervals need at least 100 draws (have " + std::to_string(draws.ybar.size()) + ")");
  }
  std::vector<double> sorted(draws.ybar.data(), draws.ybar.data() + draws.ybar.size());
  std::sort(sorted.begin(), sorted.end());
  const double alpha = 1.0 - level;
  PosteriorSummary s;
  s.point = posterior_mean(draws);
  s.lower = quantile_sorted(sorted, 0.5 * alpha);
  s.upper = quantile_sorted(sorted, 1.0 - 0.5 * alpha);
  s.level = level;
  s.n_draws = draws.ybar.size();
  return s;
}

}  // namespace abgreg
