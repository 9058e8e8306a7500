// Deterministic random draws used by the sampler and the simulator.
// All algorithms are fixed here (not delegated to libstdc++ distribution
// objects) so that streams are reproducible across platforms.
#pragma once

#include <cstdint>
#include <random>

namespace abund {

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t raw() { return gen_(); }

  // Uniform on (0,1); never returns an exact endpoint.
  double uniform();

  // Standard normal via Box-Muller with a cached spare.
  double normal();

  // Gamma(shape, 1), Marsaglia-Tsang; shape < 1 via the boost relation
  // G(a) = G(a+1) * U^(1/a).
  double gamma(double shape);

  // Inverse-gamma(shape, scale): scale / Gamma(shape, 1).
  double inv_gamma(double shape, double scale) { return scale / gamma(shape); }

  // Exact Binomial(n, p) by geometric waiting-time skips, O(n*p) expected.
  long long binomial(long long n, double p);

  // Normal(mean, sd) conditioned on (lo, hi). Rejection when the interval
  // holds appreciable mass, inverse CDF otherwise.
  double trunc_normal(double mean, double sd, double lo, double hi);

  // Uniform integer on [0, m).
  long long below(long long m);

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace abund
