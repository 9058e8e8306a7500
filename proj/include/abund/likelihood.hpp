// Log-density kernels: censored binomial outcomes, latent-count binomial,
// truncated-normal survey terms, ICAR x AR(1) field kernels, latent
// covariate terms, hyperpriors, and the full joint log posterior.
//
// All functions return log densities; impossible configurations return
// -infinity rather than throwing, so samplers can treat them as rejections.
#pragma once

#include <limits>

#include "abund/graph.hpp"
#include "abund/model.hpp"

namespace abund {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_choose(long long n, long long k);

// log P(Y = y), Y ~ Binomial(n, p). Edge probabilities 0 and 1 give point
// masses at 0 and n.
double binomial_logpmf(long long y, long long n, double p);

// log P(Y <= y). Exact summation, O(y) time.
double binomial_logcdf(long long y, long long n, double p);

// log P(lo <= Y <= hi), bounds clamped to [0, n]; empty interval -> -inf.
double binomial_log_interval(long long lo, long long hi, long long n, double p);

double normal_logpdf(double x, double mean, double sd);

// log Phi(z), accurate in both tails (asymptotic series beyond -30 sd).
double log_normal_cdf(double z);

// Normal(mean, sd) truncated to the open interval (lo, hi); x outside gives
// -inf. The normalizer is evaluated in log space so extreme bounds stay
// finite and exact.
double truncnorm_logpdf(double x, double mean, double sd, double lo, double hi);

// Inverse-gamma(shape, scale) with density proportional to
// x^-(shape+1) exp(-scale/x).
double inv_gamma_logpdf(double x, double shape, double scale);

// Admissions-style outcome at one cell. censor 0: count is the observed
// total. censor 1: count is the adult component, total in
// {count+1,...,count+9}. censor 2: total in {2,...,18}.
double treatment_loglik(int censor, long long count, long long n, double p);

// Fully observed count outcome at one cell.
double death_loglik(long long y, long long n, double p);

// N ~ Binomial(population, rate); any rate outside the open unit interval
// is impossible.
double latent_count_loglik(long long N, long long population, double rate);

// Sum of truncated-normal terms tying survey estimates to the prevalence
// trend. Throws ValidationError on a non-positive standard error.
double survey_loglik(const SurveyEstimates& survey, double beta0, double beta1);

// Quadratic form sum_t d_t' (H - A) d_t with d_1 = x_1 and
// d_t = x_t - phi x_{t-1}; edge-list evaluation.
double icar_quadform(const Field& x, double phi, const AdjacencyGraph& g);

// Joint field kernel: -quadform / (2 tau2) - T (n-1)/2 log(tau2). The
// tau-free eigenvalue constant is omitted.
double icar_ar1_loglik(const Field& x, double phi, double tau2,
                       const AdjacencyGraph& g);

// Terms of the quadratic form that involve site (i,t) when that site is set
// to `value` (slice t plus the lag coupling into slice t+1).
double icar_site_quadform(const Field& x, int i, int t, double value,
                          double phi, const AdjacencyGraph& g);

struct GaussianMoments {
  double mean = 0.0;
  double var = 0.0;
};

// Sequential conditional at one site: the lagged neighbourhood form
// N(phi x_{i,t-1} + avg_j (x_{j,t} - phi x_{j,t-1}), tau2 / w_i) with the
// no-lag form in the first slice.
GaussianMoments icar_conditional(const Field& x, int i, int t, double phi,
                                 double tau2, const AdjacencyGraph& g);

// Exact Gaussian full conditional of site (i,t) under the joint kernel,
// including the lag coupling from slice t+1. Coincides with
// icar_conditional in the final slice and whenever phi = 0.
GaussianMoments icar_full_conditional(const Field& x, int i, int t, double phi,
                                      double tau2, const AdjacencyGraph& g);

// All terms of one latent covariate: observation terms for 1-year and
// 5-year estimates plus the county process terms, each truncated to (0,100).
double acs_loglik(const AcsVariableState& st, const AcsVariableData& data);

// Hyperpriors: inverse-gamma(1/2, 1/2) on variances, uniform(0,1) on phi,
// uniform(0,100) on latent statewide means, flat on coefficients.
double prior_logdensity(const ModelState& s);

// Data-side log likelihood of outcome k at one cell.
double cell_outcome_loglik(const ModelState& s, const SurveillancePanel& p,
                           int i, int t, int k);

// Latent-count term at one cell.
double cell_latent_loglik(const ModelState& s, const SurveillancePanel& p,
                          int i, int t);

// Full joint log posterior (data, process, priors).
double log_posterior(const ModelState& s, const SurveillancePanel& p,
                     const SurveyEstimates& survey, const AdjacencyGraph& g);

}  // namespace abund
