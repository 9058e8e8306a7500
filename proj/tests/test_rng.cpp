// Distributional sanity for the deterministic generator: moments, exact
// pmf agreement for the binomial skip algorithm, truncation bounds for the
// two truncated-normal regimes, and stream reproducibility.
#include <doctest.h>

#include <cmath>
#include <vector>

#include "abund/common.hpp"
#include "abund/likelihood.hpp"
#include "abund/rng.hpp"

using namespace abund;

TEST_CASE("identical seeds give identical streams, distinct seeds differ") {
  Rng a(99), b(99), c(100);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 64; ++i) {
    uint64_t va = a.raw(), vb = b.raw(), vc = c.raw();
    all_equal = all_equal && va == vb;
    any_diff = any_diff || va != vc;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("seed mixing separates nearby streams") {
  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
  CHECK(mix_seed(1, 0) != mix_seed(2, 0));
  CHECK(mix_seed(7, 3) == mix_seed(7, 3));
}

TEST_CASE("uniform stays inside the open unit interval with mean one half") {
  Rng rng(1);
  double sum = 0.0;
  int n = 200000;
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("normal draws have standard moments") {
  Rng rng(2);
  int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  double mean = s / n;
  double var = s2 / n - mean * mean;
  CHECK(mean == doctest::Approx(0.0).epsilon(1.0).scale(0.01));
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("gamma draws match shape mean and variance") {
  for (double shape : {0.5, 1.0, 3.7}) {
    Rng rng(3);
    int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      double g = rng.gamma(shape);
      REQUIRE(g > 0.0);
      s += g;
      s2 += g * g;
    }
    double mean = s / n;
    double var = s2 / n - mean * mean;
    CHECK(mean == doctest::Approx(shape).epsilon(0.02));
    CHECK(var == doctest::Approx(shape).epsilon(0.05));
  }
}

TEST_CASE("inverse gamma draws match the analytic mean") {
  // mean = scale / (shape - 1) for shape > 1
  Rng rng(4);
  int n = 200000;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += rng.inv_gamma(4.0, 6.0);
  CHECK(s / n == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("binomial matches the exact pmf") {
  Rng rng(5);
  long long n = 12;
  double p = 0.3;
  int draws = 300000;
  std::vector<long long> hist(n + 1, 0);
  for (int i = 0; i < draws; ++i) {
    long long y = rng.binomial(n, p);
    REQUIRE(y >= 0);
    REQUIRE(y <= n);
    ++hist[y];
  }
  for (long long y = 0; y <= n; ++y) {
    double want = std::exp(binomial_logpmf(y, n, p));
    double got = (double)hist[y] / draws;
    CHECK(std::fabs(got - want) < 0.005);
  }
}

TEST_CASE("binomial edge cases are exact") {
  Rng rng(6);
  CHECK(rng.binomial(50, 0.0) == 0);
  CHECK(rng.binomial(50, 1.0) == 50);
  CHECK(rng.binomial(0, 0.37) == 0);
  // High p runs through the reflected tail.
  double s = 0.0;
  int n = 50000;
  for (int i = 0; i < n; ++i) s += (double)rng.binomial(20, 0.95);
  CHECK(s / n == doctest::Approx(19.0).epsilon(0.005));
}

TEST_CASE("truncated normal respects bounds in both sampling regimes") {
  Rng rng(7);
  // Interval with appreciable mass: rejection sampling.
  for (int i = 0; i < 50000; ++i) {
    double x = rng.trunc_normal(0.5, 0.3, 0.0, 1.0);
    REQUIRE(x > 0.0);
    REQUIRE(x < 1.0);
  }
  // Interval far in the tail: inverse CDF.
  for (int i = 0; i < 20000; ++i) {
    double x = rng.trunc_normal(0.0, 1.0, 8.0, 9.0);
    REQUIRE(x >= 8.0);
    REQUIRE(x <= 9.0);
    REQUIRE(std::isfinite(x));
  }
}

TEST_CASE("truncated normal matches analytic moments") {
  // X ~ N(mu, sd) on (lo, hi): mean = mu + sd (phi(a) - phi(b)) / Z with
  // a, b the standardized bounds and Z = Phi(b) - Phi(a).
  double mu = 0.5, sd = 0.4, lo = 0.0, hi = 1.0;
  double a = (lo - mu) / sd, b = (hi - mu) / sd;
  auto phi = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); };
  auto Phi = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
  double Z = Phi(b) - Phi(a);
  double want = mu + sd * (phi(a) - phi(b)) / Z;
  Rng rng(8);
  int n = 200000;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += rng.trunc_normal(mu, sd, lo, hi);
  CHECK(s / n == doctest::Approx(want).epsilon(0.005));
}

TEST_CASE("below draws uniform integers over the range") {
  Rng rng(9);
  std::vector<long long> hist(7, 0);
  int n = 140000;
  for (int i = 0; i < n; ++i) {
    long long v = rng.below(7);
    REQUIRE(v >= 0);
    REQUIRE(v < 7);
    ++hist[v];
  }
  for (long long c : hist) {
    CHECK((double)c / n == doctest::Approx(1.0 / 7.0).epsilon(0.05));
  }
}
