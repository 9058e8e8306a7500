// Oracle checks for the likelihood kernels: brute-force enumeration of the
// censored binomial terms, dense matrix evaluation of the ICAR quadratic
// form, finite-difference checks of the site conditionals, quadrature of
// the truncated-normal density, and closed-form survey coefficients.
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "abund/graph.hpp"
#include "abund/likelihood.hpp"
#include "abund/model.hpp"

using namespace abund;

namespace {

// Independent binomial pmf via long double lgamma, summed in linear space.
long double pmf_ld(long long y, long long n, long double p) {
  if (y < 0 || y > n) return 0.0L;
  if (p <= 0.0L) return y == 0 ? 1.0L : 0.0L;
  if (p >= 1.0L) return y == n ? 1.0L : 0.0L;
  long double lg = lgammal((long double)n + 1) - lgammal((long double)y + 1) -
                   lgammal((long double)(n - y) + 1) + (long double)y * logl(p) +
                   (long double)(n - y) * logl(1.0L - p);
  return expl(lg);
}

double brute_interval(long long lo, long long hi, long long n, double p) {
  if (lo < 0) lo = 0;
  if (hi > n) hi = n;
  long double s = 0.0L;
  for (long long y = lo; y <= hi; ++y) s += pmf_ld(y, n, p);
  if (s <= 0.0L) return -std::numeric_limits<double>::infinity();
  return (double)logl(s);
}

AdjacencyGraph graph_from(const std::string& text) {
  std::istringstream in(text);
  return load_adjacency(in);
}

// Random connected graph: a random spanning tree plus extra random edges.
AdjacencyGraph random_graph(int n, std::mt19937_64& gen) {
  std::ostringstream edges;
  std::uniform_int_distribution<int> pick(0, n - 1);
  for (int v = 1; v < n; ++v) {
    int u = std::uniform_int_distribution<int>(0, v - 1)(gen);
    edges << "g" << u << " g" << v << "\n";
  }
  int extra = n / 2;
  for (int e = 0; e < extra; ++e) {
    int a = pick(gen), b = pick(gen);
    if (a != b) edges << "g" << a << " g" << b << "\n";
  }
  return graph_from(edges.str());
}

double dense_quadform(const Field& x, double phi, const AdjacencyGraph& g) {
  int n = g.n_regions;
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (auto [i, j] : g.edges) {
    L(i, i) += 1.0;
    L(j, j) += 1.0;
    L(i, j) -= 1.0;
    L(j, i) -= 1.0;
  }
  double acc = 0.0;
  for (int t = 0; t < x.T; ++t) {
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) {
      d(i) = x(i, t) - (t > 0 ? phi * x(i, t - 1) : 0.0);
    }
    acc += d.dot(L * d);
  }
  return acc;
}

Field random_field(int n, int T, std::mt19937_64& gen) {
  Field x(n, T);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (double& v : x.data) v = nd(gen);
  return x;
}

// Mean and variance implied by the joint kernel as a function of one site,
// via central differences of f(v) = -quadform(x | x_it = v) / (2 tau2).
GaussianMoments fd_moments(const Field& x0, int i, int t, double phi, double tau2,
                           const AdjacencyGraph& g) {
  Field x = x0;
  auto f = [&](double v) {
    x(i, t) = v;
    return -icar_quadform(x, phi, g) / (2.0 * tau2);
  };
  // The kernel is exactly quadratic in the site value, so central
  // differences are exact for any step; a wide step minimizes roundoff.
  double v0 = x0(i, t), h = 0.5;
  double fm = f(v0 - h), f0 = f(v0), fp = f(v0 + h);
  double d1 = (fp - fm) / (2.0 * h);
  double d2 = (fp - 2.0 * f0 + fm) / (h * h);
  GaussianMoments m;
  m.var = -1.0 / d2;
  m.mean = v0 + d1 * m.var;
  return m;
}

}  // namespace

TEST_CASE("log_choose matches small exact values") {
  CHECK(log_choose(5, 2) == doctest::Approx(std::log(10.0)).epsilon(1e-14));
  CHECK(log_choose(10, 0) == doctest::Approx(0.0));
  CHECK(log_choose(10, 10) == doctest::Approx(0.0));
  CHECK(log_choose(52, 5) == doctest::Approx(std::log(2598960.0)).epsilon(1e-13));
  CHECK(log_choose(3, 5) == kNegInf);
  CHECK(log_choose(3, -1) == kNegInf);
}

TEST_CASE("binomial pmf normalizes and matches direct evaluation") {
  for (double p : {1e-6, 0.03, 0.5, 0.97, 1.0 - 1e-9}) {
    long long n = 25;
    long double total = 0.0L;
    for (long long y = 0; y <= n; ++y) {
      double lp = binomial_logpmf(y, n, p);
      CHECK(lp == doctest::Approx((double)logl(pmf_ld(y, n, p))).epsilon(1e-11));
      total += expl((long double)lp);
    }
    CHECK((double)total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("binomial edge probabilities give point masses") {
  CHECK(binomial_logpmf(0, 10, 0.0) == doctest::Approx(0.0));
  CHECK(binomial_logpmf(1, 10, 0.0) == kNegInf);
  CHECK(binomial_logpmf(10, 10, 1.0) == doctest::Approx(0.0));
  CHECK(binomial_logpmf(9, 10, 1.0) == kNegInf);
  CHECK(binomial_logpmf(-1, 10, 0.3) == kNegInf);
  CHECK(binomial_logpmf(11, 10, 0.3) == kNegInf);
}

TEST_CASE("binomial log cdf equals cumulative sums") {
  long long n = 40;
  double p = 0.23;
  long double run = 0.0L;
  for (long long y = 0; y <= n; ++y) {
    run += pmf_ld(y, n, p);
    CHECK(binomial_logcdf(y, n, p) ==
          doctest::Approx((double)logl(run)).epsilon(1e-11));
  }
  CHECK(binomial_logcdf(-1, n, p) == kNegInf);
  CHECK(binomial_logcdf(n + 5, n, p) == doctest::Approx(0.0));
}

TEST_CASE("interval probability equals brute-force sums") {
  std::mt19937_64 gen(42);
  std::uniform_int_distribution<long long> nd(1, 200);
  std::uniform_real_distribution<double> pd(0.001, 0.999);
  for (int rep = 0; rep < 50; ++rep) {
    long long n = nd(gen);
    double p = pd(gen);
    long long a = std::uniform_int_distribution<long long>(0, n)(gen);
    long long b = std::uniform_int_distribution<long long>(0, n)(gen);
    if (a > b) std::swap(a, b);
    double got = binomial_log_interval(a, b, n, p);
    double want = brute_interval(a, b, n, p);
    CHECK(std::fabs(got - want) < 1e-10);
  }
  CHECK(binomial_log_interval(5, 4, 10, 0.5) == kNegInf);
  CHECK(binomial_log_interval(11, 20, 10, 0.5) == kNegInf);
}

TEST_CASE("treatment likelihood matches enumeration across censor codes") {
  std::mt19937_64 gen(7);
  std::uniform_int_distribution<long long> nd(1, 200);
  std::uniform_real_distribution<double> pd(0.001, 0.999);
  for (int rep = 0; rep < 200; ++rep) {
    long long n = nd(gen);
    double p = pd(gen);
    int censor = rep % 3;
    long long count = std::uniform_int_distribution<long long>(0, n)(gen);
    double got = treatment_loglik(censor, count, n, p);
    double want;
    switch (censor) {
      case 0: want = brute_interval(count, count, n, p); break;
      case 1: want = brute_interval(count + 1, count + 9, n, p); break;
      default: want = brute_interval(2, 18, n, p); break;
    }
    if (want == kNegInf) {
      CHECK(got == kNegInf);
    } else {
      CHECK(std::fabs(got - want) < 1e-10);
    }
  }
}

TEST_CASE("treatment likelihood flags impossible configurations") {
  CHECK(treatment_loglik(0, 6, 5, 0.3) == kNegInf);   // count above n
  CHECK(treatment_loglik(1, 5, 5, 0.3) == kNegInf);   // needs total >= 6
  CHECK(treatment_loglik(2, 0, 1, 0.3) == kNegInf);   // needs total >= 2
  CHECK(treatment_loglik(1, 0, 1, 0.3) ==
        doctest::Approx(binomial_logpmf(1, 1, 0.3)).epsilon(1e-12));
}

TEST_CASE("death and latent count terms reduce to binomial pmfs") {
  CHECK(death_loglik(3, 20, 0.1) ==
        doctest::Approx(binomial_logpmf(3, 20, 0.1)).epsilon(1e-14));
  CHECK(latent_count_loglik(12, 100, 0.13) ==
        doctest::Approx(binomial_logpmf(12, 100, 0.13)).epsilon(1e-14));
  CHECK(latent_count_loglik(12, 100, 0.0) == kNegInf);
  CHECK(latent_count_loglik(12, 100, 1.0) == kNegInf);
  CHECK(latent_count_loglik(12, 100, -0.2) == kNegInf);
  CHECK(latent_count_loglik(12, 100, 1.7) == kNegInf);
}

TEST_CASE("normal log pdf matches the closed form") {
  double x = 1.3, m = -0.4, sd = 2.2;
  double want = -0.5 * std::log(2.0 * M_PI) - std::log(sd) -
                0.5 * (x - m) * (x - m) / (sd * sd);
  CHECK(normal_logpdf(x, m, sd) == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("log normal cdf is accurate in the body and both tails") {
  for (double z : {-8.0, -3.0, -1.0, 0.0, 0.7, 2.5, 6.0}) {
    double want = std::log(0.5 * std::erfc(-z / std::sqrt(2.0)));
    CHECK(log_normal_cdf(z) == doctest::Approx(want).epsilon(1e-12));
  }
  // Deep lower tail: compare against the Mills-ratio asymptotic expansion.
  for (double z : {-35.0, -40.0, -60.0}) {
    double z2 = z * z;
    double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
    double want = -0.5 * z2 - 0.5 * std::log(2.0 * M_PI) - std::log(-z) +
                  std::log(series);
    CHECK(log_normal_cdf(z) == doctest::Approx(want).epsilon(1e-10));
  }
  // Monotone and complementary in the body.
  CHECK(log_normal_cdf(-40.0) < log_normal_cdf(-39.0));
  double p = std::exp(log_normal_cdf(1.234));
  double q = std::exp(log_normal_cdf(-1.234));
  CHECK(p + q == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("truncated normal density integrates to one") {
  struct Case {
    double mean, sd, lo, hi;
  };
  for (const Case& c : {Case{0.05, 0.01, 0.0, 1.0}, Case{0.5, 2.0, 0.0, 1.0},
                        Case{-3.0, 0.7, 0.0, 1.0}, Case{50.0, 9.0, 0.0, 100.0}}) {
    int steps = 200000;
    long double h = (long double)(c.hi - c.lo) / steps;
    long double acc = 0.0L;
    for (int s = 0; s < steps; ++s) {
      double x = c.lo + (s + 0.5) * (double)h;
      acc += expl((long double)truncnorm_logpdf(x, c.mean, c.sd, c.lo, c.hi));
    }
    CHECK((double)(acc * h) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("truncated normal handles extreme off-interval means") {
  // Both bounds far above the mean: the normalizer must come from the tail
  // expansion, and the density must still integrate to one.
  double mean = 0.0, sd = 1.0, lo = 38.0, hi = 39.0;
  int steps = 400000;
  long double h = (long double)(hi - lo) / steps;
  long double acc = 0.0L;
  for (int s = 0; s < steps; ++s) {
    double x = lo + (s + 0.5) * (double)h;
    double lp = truncnorm_logpdf(x, mean, sd, lo, hi);
    CHECK(std::isfinite(lp));
    acc += expl((long double)lp);
  }
  CHECK((double)(acc * h) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(truncnorm_logpdf(lo - 0.5, mean, sd, lo, hi) == kNegInf);
  CHECK(truncnorm_logpdf(hi + 0.5, mean, sd, lo, hi) == kNegInf);
}

TEST_CASE("truncated normal is shift invariant") {
  double base = truncnorm_logpdf(0.3, 0.1, 0.25, 0.0, 1.0);
  double moved = truncnorm_logpdf(10.3, 10.1, 0.25, 10.0, 11.0);
  CHECK(base == doctest::Approx(moved).epsilon(1e-12));
}

TEST_CASE("inverse gamma log pdf matches the closed form") {
  double x = 0.37, a = 0.5, b = 0.5;
  double want = a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(x) - b / x;
  CHECK(inv_gamma_logpdf(x, a, b) == doctest::Approx(want).epsilon(1e-13));
  CHECK(inv_gamma_logpdf(0.0, a, b) == kNegInf);
  CHECK(inv_gamma_logpdf(-1.0, a, b) == kNegInf);
}

TEST_CASE("survey span coefficient equals the average year, exactly") {
  for (int a = -5; a <= 10; ++a) {
    for (int b = a; b <= 10; ++b) {
      long long sum = 0;
      for (int t = a; t <= b; ++t) sum += t;
      double direct = (double)sum / (double)(b - a + 1);
      CHECK(survey_mean_coeff(a, b) == direct);
    }
  }
}

TEST_CASE("survey log likelihood sums truncated normal terms") {
  SurveyEstimates sv;
  sv.rows = {{-3, 0, 0.05, 0.0025}, {1, 4, 0.055, 0.0026}, {5, 5, 0.047, 0.0041}};
  double beta0 = 0.051, beta1 = -0.0008;
  double want = 0.0;
  for (const SurveyRow& r : sv.rows) {
    double m = beta0 + beta1 * survey_mean_coeff(r.a, r.b);
    want += truncnorm_logpdf(r.estimate, m, r.se, 0.0, 1.0);
  }
  CHECK(survey_loglik(sv, beta0, beta1) == doctest::Approx(want).epsilon(1e-13));
  SurveyEstimates bad = sv;
  bad.rows[1].se = 0.0;
  CHECK_THROWS_AS(survey_loglik(bad, beta0, beta1), ValidationError);
}

TEST_CASE("edge-based quadratic form equals the dense Laplacian form") {
  std::mt19937_64 gen(2024);
  for (int rep = 0; rep < 30; ++rep) {
    int n = std::uniform_int_distribution<int>(2, 16)(gen);
    int T = std::uniform_int_distribution<int>(1, 4)(gen);
    double phi = std::uniform_real_distribution<double>(0.0, 0.99)(gen);
    AdjacencyGraph g = random_graph(n, gen);
    Field x = random_field(g.n_regions, T, gen);
    double sparse = icar_quadform(x, phi, g);
    double dense = dense_quadform(x, phi, g);
    CHECK(std::fabs(sparse - dense) < 1e-9);
  }
}

TEST_CASE("joint field kernel combines quadform and log variance penalty") {
  std::mt19937_64 gen(5);
  AdjacencyGraph g = random_graph(7, gen);
  Field x = random_field(7, 3, gen);
  double phi = 0.6, tau2 = 0.37;
  double want = -icar_quadform(x, phi, g) / (2.0 * tau2) -
                3.0 * (7 - 1) / 2.0 * std::log(tau2);
  CHECK(icar_ar1_loglik(x, phi, tau2, g) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("site quadform tracks full quadform differences") {
  std::mt19937_64 gen(11);
  AdjacencyGraph g = random_graph(9, gen);
  Field x = random_field(9, 4, gen);
  double phi = 0.75;
  for (int rep = 0; rep < 40; ++rep) {
    int i = std::uniform_int_distribution<int>(0, 8)(gen);
    int t = std::uniform_int_distribution<int>(0, 3)(gen);
    double v = std::normal_distribution<double>(0.0, 2.0)(gen);
    double before = icar_quadform(x, phi, g);
    double site_old = icar_site_quadform(x, i, t, x(i, t), phi, g);
    Field y = x;
    y(i, t) = v;
    double after = icar_quadform(y, phi, g);
    double site_new = icar_site_quadform(x, i, t, v, phi, g);
    CHECK(after - before == doctest::Approx(site_new - site_old).epsilon(1e-9));
  }
}

TEST_CASE("exact site conditional matches finite differences everywhere") {
  AdjacencyGraph g = graph_from("a b\nb c\n");
  std::mt19937_64 gen(19);
  Field x = random_field(3, 3, gen);
  double tau2 = 0.42;
  for (double phi : {0.0, 0.35, 0.9}) {
    for (int t = 0; t < 3; ++t) {
      for (int i = 0; i < 3; ++i) {
        GaussianMoments want = fd_moments(x, i, t, phi, tau2, g);
        GaussianMoments got = icar_full_conditional(x, i, t, phi, tau2, g);
        CHECK(std::fabs(got.mean - want.mean) < 1e-8);
        CHECK(std::fabs(got.var - want.var) < 1e-8);
      }
    }
  }
}

TEST_CASE("sequential conditional is exact in the final slice and at phi zero") {
  AdjacencyGraph g = graph_from("a b\nb c\n");
  std::mt19937_64 gen(23);
  Field x = random_field(3, 3, gen);
  double tau2 = 0.2;
  for (double phi : {0.0, 0.55}) {
    for (int i = 0; i < 3; ++i) {
      GaussianMoments want = fd_moments(x, i, 2, phi, tau2, g);
      GaussianMoments got = icar_conditional(x, i, 2, phi, tau2, g);
      CHECK(std::fabs(got.mean - want.mean) < 1e-8);
      CHECK(std::fabs(got.var - want.var) < 1e-8);
    }
  }
  for (int t = 0; t < 3; ++t) {
    for (int i = 0; i < 3; ++i) {
      GaussianMoments seq = icar_conditional(x, i, t, 0.0, tau2, g);
      GaussianMoments full = icar_full_conditional(x, i, t, 0.0, tau2, g);
      CHECK(seq.mean == doctest::Approx(full.mean).epsilon(1e-12));
      CHECK(seq.var == doctest::Approx(full.var).epsilon(1e-12));
    }
  }
}

TEST_CASE("sequential conditional interior variance uses the lagged form") {
  // Interior slices with nonzero phi: the sequential form has variance
  // tau2 / w_i while the exact conditional shrinks by 1 + phi^2.
  AdjacencyGraph g = graph_from("a b\nb c\n");
  std::mt19937_64 gen(29);
  Field x = random_field(3, 3, gen);
  double tau2 = 0.3, phi = 0.8;
  GaussianMoments seq = icar_conditional(x, 1, 1, phi, tau2, g);
  GaussianMoments full = icar_full_conditional(x, 1, 1, phi, tau2, g);
  CHECK(seq.var == doctest::Approx(tau2 / 2.0).epsilon(1e-12));
  CHECK(full.var == doctest::Approx(tau2 / (2.0 * (1.0 + phi * phi))).epsilon(1e-12));
}

TEST_CASE("latent covariate terms sum observation and process densities") {
  AcsVariableData data;
  data.name = "pov";
  data.t_min = -3;
  data.t_max = 2;
  data.one_year = {{0, 1, 12.0, 1.5}, {1, 2, 30.0, 2.0}};
  data.five_year = {{1, 1, 20.0, 0.8}};
  AcsVariableState st;
  st.omega = Field(2, data.n_years());
  for (int lt = 0; lt < data.n_years(); ++lt) {
    st.omega(0, lt) = 10.0 + lt;
    st.omega(1, lt) = 25.0 - lt;
  }
  st.omega_t = {18.0, 18.5, 19.0, 19.5, 20.0, 20.5};
  st.tau2 = {4.0, 9.0};
  double want = 0.0;
  want += truncnorm_logpdf(12.0, st.omega(0, data.lt(1)), 1.5, 0.0, 100.0);
  want += truncnorm_logpdf(30.0, st.omega(1, data.lt(2)), 2.0, 0.0, 100.0);
  double m5 = 0.0;
  for (int t = -3; t <= 1; ++t) m5 += st.omega(1, data.lt(t));
  want += truncnorm_logpdf(20.0, m5 / 5.0, 0.8, 0.0, 100.0);
  for (int lt = 0; lt < data.n_years(); ++lt) {
    for (int i = 0; i < 2; ++i) {
      want += truncnorm_logpdf(st.omega(i, lt), st.omega_t[lt],
                               std::sqrt(st.tau2[i]), 0.0, 100.0);
    }
  }
  CHECK(acs_loglik(st, data) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("prior density gates the support and sums component terms") {
  ModelState s;
  s.sigma2_eps = {0.3, 0.4};
  s.tau2_f = {0.2, 0.25};
  s.phi_f = {0.5, 0.9};
  s.tau2_u = 0.15;
  s.phi_u = 0.45;
  s.sigma2_v = 0.08;
  double want = 0.0;
  for (double x : {0.3, 0.4, 0.2, 0.25, 0.15, 0.08}) {
    want += inv_gamma_logpdf(x, 0.5, 0.5);
  }
  CHECK(prior_logdensity(s) == doctest::Approx(want).epsilon(1e-12));
  ModelState bad = s;
  bad.phi_u = 1.0;
  CHECK(prior_logdensity(bad) == kNegInf);
  bad = s;
  bad.phi_f[1] = -0.1;
  CHECK(prior_logdensity(bad) == kNegInf);

  AcsVariableState av;
  av.omega_t = {50.0, 60.0};
  av.tau2 = {2.0};
  s.acs = {av};
  double want_acs = want + inv_gamma_logpdf(2.0, 0.5, 0.5) - 2.0 * std::log(100.0);
  CHECK(prior_logdensity(s) == doctest::Approx(want_acs).epsilon(1e-12));
  s.acs[0].omega_t[1] = 100.0;
  CHECK(prior_logdensity(s) == kNegInf);
}
