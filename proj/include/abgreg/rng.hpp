#ifndef ABGREG_RNG_HPP_
#define ABGREG_RNG_HPP_

#include <cstdint>
#include <random>

namespace abgreg {

using Rng = std::mt19937_64;

// Stream derivation: every independent consumer of randomness (a replication,
// a method within a replication, a chain) gets its own engine keyed by
// (seed, stream). Engines are never shared between threads.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

double draw_uniform(Rng& rng);
double draw_normal(Rng& rng);
double draw_exponential(Rng& rng, double rate);
// Gamma with shape/rate parameterization.
double draw_gamma(Rng& rng, double shape, double rate);
// If G ~ Gamma(shape, rate) then 1/G ~ InvGamma(shape, rate).
double draw_inv_gamma(Rng& rng, double shape, double rate);
// Inverse Gaussian with mean mu and shape lambda,
// f(x) = sqrt(lambda / (2 pi x^3)) exp(-lambda (x - mu)^2 / (2 mu^2 x)).
// Michael, Schucany and Haas (1976) transformation.
double draw_inverse_gaussian(Rng& rng, double mu, double shape);

}  // namespace abgreg

#endif  // ABGREG_RNG_HPP_
