#include "abgreg/rng.hpp"

#include <cmath>
#include <limits>

#include "abgreg/error.hpp"

namespace abgreg {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = derive_seed(seed, stream);
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
  return Rng(seq);
}

double draw_uniform(Rng& rng) {
  // (0, 1): never returns an endpoint.
  constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
  return (static_cast<double>(rng() >> 11) + 0.5) * scale;
}

double draw_normal(Rng& rng) {
  // Fresh distribution object per call so no cached deviate leaks between
  // callers sharing an engine.
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

double draw_exponential(Rng& rng, double rate) {
  if (!(rate > 0.0)) numerical_error("exponential rate must be positive");
  return -std::log(draw_uniform(rng)) / rate;
}

double draw_gamma(Rng& rng, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate)) {
    numerical_error("gamma draw requires finite positive shape and rate");
  }
  std::gamma_distribution<double> dist(shape, 1.0);
  return dist(rng) / rate;
}

double draw_inv_gamma(Rng& rng, double shape, double rate) {
  double g = draw_gamma(rng, shape, rate);
  constexpr double tiny = std::numeric_limits<double>::min();
  if (g < tiny) g = tiny;
  return 1.0 / g;
}

double draw_inverse_gaussian(Rng& rng, double mu, double shape) {
  if (!(mu > 0.0) || !(shape > 0.0) || !std::isfinite(shape)) {
    numerical_error("inverse Gaussian requires positive mean and shape");
  }
  if (!std::isfinite(mu)) {
    // Limit mu -> inf is the Levy distribution with scale `shape`.
    double z = draw_normal(rng);
    return shape / (z * z);
  }
  double nu = draw_normal(rng);
  double t = mu * nu * nu / (2.0 * shape);
  // mu (1 + t - sqrt(t^2 + 2t)) rewritten without cancellation.
  double x = mu / (1.0 + t + std::sqrt(t * t + 2.0 * t));
  if (draw_uniform(rng) <= mu / (mu + x)) return x;
  return mu * mu / x;
}

}  // namespace abgreg
