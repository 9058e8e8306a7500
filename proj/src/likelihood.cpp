#include "abund/likelihood.hpp"

#include <cmath>

namespace abund {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kSqrt1_2 = 0.70710678118654752440084436210485;

// log(exp(a) - exp(b)) for a > b.
double logdiffexp(double a, double b) {
  if (b == kNegInf) return a;
  return a + std::log1p(-std::exp(b - a));
}

}  // namespace

double log_choose(long long n, long long k) {
  if (k < 0 || k > n) return kNegInf;
  return std::lgamma(static_cast<double>(n) + 1.0) -
         std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

double binomial_logpmf(long long y, long long n, double p) {
  if (n < 0 || y < 0 || y > n) return kNegInf;
  if (!(p >= 0.0 && p <= 1.0)) return kNegInf;
  if (p == 0.0) return y == 0 ? 0.0 : kNegInf;
  if (p == 1.0) return y == n ? 0.0 : kNegInf;
  return log_choose(n, y) + static_cast<double>(y) * std::log(p) +
         static_cast<double>(n - y) * std::log1p(-p);
}

double binomial_log_interval(long long lo, long long hi, long long n, double p) {
  if (n < 0) return kNegInf;
  if (!(p >= 0.0 && p <= 1.0)) return kNegInf;
  if (lo < 0) lo = 0;
  if (hi > n) hi = n;
  if (lo > hi) return kNegInf;
  if (p == 0.0) return lo == 0 ? 0.0 : kNegInf;
  if (p == 1.0) return hi == n ? 0.0 : kNegInf;
  double lp = binomial_logpmf(lo, n, p);
  if (lo == hi) return lp;
  // Sum relative to the first term; successive pmf ratios are exact and the
  // running total is renormalized before it can overflow.
  double acc = 1.0, term = 1.0, shift = 0.0;
  double odds = p / (1.0 - p);
  for (long long j = lo; j < hi; ++j) {
    term *= static_cast<double>(n - j) / static_cast<double>(j + 1) * odds;
    acc += term;
    if (acc > 1e280) {
      shift += std::log(acc);
      term /= acc;
      acc = 1.0;
    }
  }
  double out = lp + shift + std::log(acc);
  return out > 0.0 ? 0.0 : out;
}

double binomial_logcdf(long long y, long long n, double p) {
  if (y < 0) return kNegInf;
  if (y >= n) return 0.0;
  return binomial_log_interval(0, y, n, p);
}

double normal_logpdf(double x, double mean, double sd) {
  double z = (x - mean) / sd;
  return -0.5 * kLog2Pi - std::log(sd) - 0.5 * z * z;
}

double log_normal_cdf(double z) {
  if (z < -30.0) {
    // Mills-ratio series; five correction terms keep relative error below
    // ~1e-13 at the switch point.
    double z2 = z * z;
    double c = -1.0 / z2 * (1.0 - 3.0 / z2 * (1.0 - 5.0 / z2 * (1.0 - 7.0 / z2 * (1.0 - 9.0 / z2))));
    return -0.5 * kLog2Pi - 0.5 * z2 - std::log(-z) + std::log1p(c);
  }
  if (z > 8.0) {
    return std::log1p(-0.5 * std::erfc(z * kSqrt1_2));
  }
  return std::log(0.5 * std::erfc(-z * kSqrt1_2));
}

double truncnorm_logpdf(double x, double mean, double sd, double lo, double hi) {
  if (!(sd > 0.0) || !(lo < hi)) return kNegInf;
  if (!(x > lo && x < hi)) return kNegInf;
  double za = (lo - mean) / sd;
  double zb = (hi - mean) / sd;
  double log_z;
  if (za < 0.0 && zb > 0.0) {
    // Straddling the mean: erf terms add, no cancellation.
    log_z = std::log(0.5 * (std::erf(zb * kSqrt1_2) + std::erf(-za * kSqrt1_2)));
  } else if (zb <= 0.0) {
    log_z = logdiffexp(log_normal_cdf(zb), log_normal_cdf(za));
  } else {
    log_z = logdiffexp(log_normal_cdf(-za), log_normal_cdf(-zb));
  }
  return normal_logpdf(x, mean, sd) - log_z;
}

double inv_gamma_logpdf(double x, double shape, double scale) {
  if (!(x > 0.0)) return kNegInf;
  return shape * std::log(scale) - std::lgamma(shape) -
         (shape + 1.0) * std::log(x) - scale / x;
}

double treatment_loglik(int censor, long long count, long long n, double p) {
  switch (censor) {
    case 0:
      return binomial_logpmf(count, n, p);
    case 1:
      return binomial_log_interval(count + 1, count + 9, n, p);
    case 2:
      return binomial_log_interval(2, 18, n, p);
    default:
      return kNegInf;
  }
}

double death_loglik(long long y, long long n, double p) {
  return binomial_logpmf(y, n, p);
}

double latent_count_loglik(long long N, long long population, double rate) {
  if (!(rate > 0.0 && rate < 1.0)) return kNegInf;
  return binomial_logpmf(N, population, rate);
}

double survey_loglik(const SurveyEstimates& survey, double beta0, double beta1) {
  double acc = 0.0;
  for (const SurveyRow& r : survey.rows) {
    if (!(r.se > 0.0)) {
      throw ValidationError("survey standard error must be positive");
    }
    double mean = beta0 + beta1 * survey_mean_coeff(r.a, r.b);
    acc += truncnorm_logpdf(r.estimate, mean, r.se, 0.0, 1.0);
    if (acc == kNegInf) return kNegInf;
  }
  return acc;
}

double icar_quadform(const Field& x, double phi, const AdjacencyGraph& g) {
  double acc = 0.0;
  for (int t = 0; t < x.T; ++t) {
    const double* cur = x.slice(t);
    const double* prev = t > 0 ? x.slice(t - 1) : nullptr;
    for (auto [i, j] : g.edges) {
      double di = prev ? cur[i] - phi * prev[i] : cur[i];
      double dj = prev ? cur[j] - phi * prev[j] : cur[j];
      double d = di - dj;
      acc += d * d;
    }
  }
  return acc;
}

double icar_ar1_loglik(const Field& x, double phi, double tau2,
                       const AdjacencyGraph& g) {
  if (!(tau2 > 0.0)) return kNegInf;
  double q = icar_quadform(x, phi, g);
  double rank = static_cast<double>(x.T) * (g.n_regions - 1);
  return -q / (2.0 * tau2) - 0.5 * rank * std::log(tau2);
}

double icar_site_quadform(const Field& x, int i, int t, double value,
                          double phi, const AdjacencyGraph& g) {
  double acc = 0.0;
  double di = t > 0 ? value - phi * x(i, t - 1) : value;
  for (int j : g.neighbors[i]) {
    double dj = t > 0 ? x(j, t) - phi * x(j, t - 1) : x(j, t);
    double d = di - dj;
    acc += d * d;
  }
  if (t + 1 < x.T) {
    double din = x(i, t + 1) - phi * value;
    for (int j : g.neighbors[i]) {
      double dj = x(j, t + 1) - phi * x(j, t);
      double d = din - dj;
      acc += d * d;
    }
  }
  return acc;
}

GaussianMoments icar_conditional(const Field& x, int i, int t, double phi,
                                 double tau2, const AdjacencyGraph& g) {
  double w = static_cast<double>(g.neighbor_counts[i]);
  GaussianMoments m;
  double nb = 0.0;
  for (int j : g.neighbors[i]) {
    nb += t > 0 ? x(j, t) - phi * x(j, t - 1) : x(j, t);
  }
  m.mean = (t > 0 ? phi * x(i, t - 1) : 0.0) + nb / w;
  m.var = tau2 / w;
  return m;
}

GaussianMoments icar_full_conditional(const Field& x, int i, int t, double phi,
                                      double tau2, const AdjacencyGraph& g) {
  double w = static_cast<double>(g.neighbor_counts[i]);
  GaussianMoments seq = icar_conditional(x, i, t, phi, tau2, g);
  if (t + 1 >= x.T) return seq;
  // Precision adds phi^2 w / tau2 from the next slice; its mean pulls the
  // site toward (x_{i,t+1} - avg_j (x_{j,t+1} - phi x_{j,t})) / phi.
  double nb = 0.0;
  for (int j : g.neighbors[i]) {
    nb += x(j, t + 1) - phi * x(j, t);
  }
  double prec = w * (1.0 + phi * phi);
  double b = w * seq.mean + phi * (w * x(i, t + 1) - nb);
  GaussianMoments m;
  m.mean = b / prec;
  m.var = tau2 / prec;
  return m;
}

double acs_loglik(const AcsVariableState& st, const AcsVariableData& data) {
  double acc = 0.0;
  for (const AcsRow& r : data.one_year) {
    acc += truncnorm_logpdf(r.value, st.omega(r.i, data.lt(r.t)), r.se, 0.0, 100.0);
  }
  for (const AcsRow& r : data.five_year) {
    double m = 0.0;
    for (int t = r.t - 4; t <= r.t; ++t) m += st.omega(r.i, data.lt(t));
    acc += truncnorm_logpdf(r.value, m / 5.0, r.se, 0.0, 100.0);
  }
  int L = data.n_years();
  for (int lt = 0; lt < L; ++lt) {
    double mean_t = st.omega_t[lt];
    for (int i = 0; i < st.omega.n; ++i) {
      acc += truncnorm_logpdf(st.omega(i, lt), mean_t, std::sqrt(st.tau2[i]), 0.0, 100.0);
    }
    if (acc == kNegInf) return kNegInf;
  }
  return acc;
}

double prior_logdensity(const ModelState& s) {
  double acc = 0.0;
  auto ig = [&](double x) { acc += inv_gamma_logpdf(x, 0.5, 0.5); };
  for (size_t k = 0; k < s.sigma2_eps.size(); ++k) {
    ig(s.sigma2_eps[k]);
    ig(s.tau2_f[k]);
    if (!(s.phi_f[k] > 0.0 && s.phi_f[k] < 1.0)) return kNegInf;
  }
  ig(s.tau2_u);
  ig(s.sigma2_v);
  if (!(s.phi_u > 0.0 && s.phi_u < 1.0)) return kNegInf;
  for (const AcsVariableState& av : s.acs) {
    for (double t2 : av.tau2) ig(t2);
    for (double w : av.omega_t) {
      if (!(w > 0.0 && w < 100.0)) return kNegInf;
      acc += -std::log(100.0);
    }
  }
  return acc;
}

double cell_outcome_loglik(const ModelState& s, const SurveillancePanel& p,
                           int i, int t, int k) {
  const OutcomeData& y = p.outcomes[k];
  double pr = detection_prob(s, p, i, t, k);
  long long n = s.N(i, t);
  if (y.censorable) {
    return treatment_loglik(y.censor_at(i, t), y.count_at(i, t), n, pr);
  }
  return death_loglik(y.count_at(i, t), n, pr);
}

double cell_latent_loglik(const ModelState& s, const SurveillancePanel& p,
                          int i, int t) {
  double rate = statewide_mean(s.beta0_mu, s.beta1_mu, t + 1) *
                relative_risk(s, p, i, t);
  return latent_count_loglik(s.N(i, t), p.population(i, t), rate);
}

double log_posterior(const ModelState& s, const SurveillancePanel& p,
                     const SurveyEstimates& survey, const AdjacencyGraph& g) {
  double acc = prior_logdensity(s);
  if (acc == kNegInf) return kNegInf;
  for (int t = 0; t < p.T; ++t) {
    for (int i = 0; i < p.n; ++i) {
      acc += cell_latent_loglik(s, p, i, t);
      for (int k = 0; k < p.K(); ++k) {
        acc += cell_outcome_loglik(s, p, i, t, k);
      }
    }
    if (acc == kNegInf) return kNegInf;
  }
  acc += survey_loglik(survey, s.beta0_mu, s.beta1_mu);
  acc += icar_ar1_loglik(s.u, s.phi_u, s.tau2_u, g);
  for (int k = 0; k < p.K(); ++k) {
    acc += icar_ar1_loglik(s.f[k], s.phi_f[k], s.tau2_f[k], g);
    double sd = std::sqrt(s.sigma2_eps[k]);
    for (double e : s.eps[k].data) acc += normal_logpdf(e, 0.0, sd);
  }
  double sdv = std::sqrt(s.sigma2_v);
  for (double e : s.v.data) acc += normal_logpdf(e, 0.0, sdv);
  for (size_t a = 0; a < s.acs.size(); ++a) {
    acc += acs_loglik(s.acs[a], p.acs[a]);
  }
  return acc;
}

}  // namespace abund
