// Data containers and state for the hierarchical abundance model.
//
// Panel layout: n regions (dense graph order) by T surveillance years,
// model year t = 1..T on the natural scale (stored 0-based). Survey spans
// may reach years at or before t = 0. K count outcomes share one latent
// count field; outcome 0 may carry interval-censored cells.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "abund/common.hpp"
#include "abund/graph.hpp"

namespace abund {

// One design column. Known columns store standardized values; latent
// columns (acs_index >= 0) read county values from the model state and
// standardize with the persisted transform.
struct DesignColumn {
  std::string name;
  Field values;
  std::vector<char> active;  // per model year, 0-based
  double center = 0.0;
  double scale = 1.0;
  int acs_index = -1;
};

struct Design {
  std::vector<DesignColumn> cols;
  int size() const { return static_cast<int>(cols.size()); }
};

// Censor codes for count cells.
//   0: total observed in `counts`
//   1: total suppressed; `counts` holds the adult component, total is in
//      {adult+1, ..., adult+9}
//   2: total and components suppressed; total is in {2, ..., 18}
struct OutcomeData {
  std::string name;
  bool censorable = false;
  IntField counts;
  std::vector<int8_t> censor;  // empty means all cells code 0
  Design design;

  int censor_at(int i, int t) const {
    return censor.empty() ? 0 : censor[static_cast<size_t>(t) * counts.n + i];
  }
  long long count_at(int i, int t) const { return counts(i, t); }
};

// Observations of one latent county-level covariate: single-year and
// five-year rolling estimates with sampling standard errors, on a (0,100)
// percentage scale. Latent years run t_min..t_max in model units (t_min
// may be non-positive when windows start before the surveillance panel).
struct AcsRow {
  int i = 0;
  int t = 0;  // model year; for five-year rows, the window's final year
  double value = 0.0;
  double se = 0.0;
};

struct AcsVariableData {
  std::string name;
  int t_min = 1;
  int t_max = 1;
  std::vector<AcsRow> one_year;
  std::vector<AcsRow> five_year;
  int n_years() const { return t_max - t_min + 1; }
  int lt(int t) const { return t - t_min; }  // latent column index
};

struct SurveillancePanel {
  int n = 0;
  int T = 0;
  std::vector<std::string> region_labels;
  IntField population;
  std::vector<OutcomeData> outcomes;
  Design risk_design;
  std::vector<AcsVariableData> acs;

  int K() const { return static_cast<int>(outcomes.size()); }
  // Structural checks; throws ValidationError naming the offending cell.
  void validate(const AdjacencyGraph& g) const;
};

// State-level survey prevalence estimates over year spans [a, b] in model
// units (a <= b, possibly non-positive).
struct SurveyRow {
  int a = 0;
  int b = 0;
  double estimate = 0.0;
  double se = 0.0;
};

struct SurveyEstimates {
  std::vector<SurveyRow> rows;
  void validate() const;
};

// Mean multiplier of the trend slope for a span [a, b]: the average of
// t over the span, (b^2 + b - a^2 + a) / (2 (b - a + 1)).
double survey_mean_coeff(int a, int b);

struct AcsVariableState {
  Field omega;                  // n x n_years latent percentages
  std::vector<double> omega_t;  // statewide yearly means
  std::vector<double> tau2;     // county-level process variances
};

struct ModelState {
  IntField N;
  Field u;                  // ICAR x AR(1) risk field
  Field v;                  // iid risk residual
  std::vector<Field> f;     // per-outcome detection fields
  std::vector<Field> eps;   // per-outcome iid detection residuals
  std::vector<std::vector<double>> mu_det;    // [k][t] yearly intercepts
  std::vector<std::vector<double>> beta_det;  // [k][col]
  std::vector<double> gamma;                  // risk coefficients
  double beta0_mu = 0.0;
  double beta1_mu = 0.0;
  std::vector<double> sigma2_eps;  // per outcome
  std::vector<double> tau2_f;
  std::vector<double> phi_f;
  double tau2_u = 1.0;
  double phi_u = 0.5;
  double sigma2_v = 1.0;
  std::vector<AcsVariableState> acs;
};

// Posterior summary of one monitored scalar: mean, sd, equal-tail 95%
// interval, and the number of pooled draws behind it.
struct PosteriorSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  long long n_draws = 0;
};

double logit(double p);
double inv_logit(double x);

// Statewide prevalence trend evaluated at model year t.
inline double statewide_mean(double beta0, double beta1, int t) {
  return beta0 + beta1 * static_cast<double>(t);
}

// Linear predictor and probability of detection for outcome k at a cell.
double detection_logit(const ModelState& s, const SurveillancePanel& p, int i,
                       int t, int k);
double detection_prob(const ModelState& s, const SurveillancePanel& p, int i,
                      int t, int k);

// Relative risk multiplier lambda_it (log scale and natural scale).
double log_relative_risk(const ModelState& s, const SurveillancePanel& p,
                         int i, int t);
double relative_risk(const ModelState& s, const SurveillancePanel& p, int i,
                     int t);

// Computes and persists the column's standardization transform (mean and
// sd over active cells). Values stay raw; linear predictors apply the
// transform on the fly.
void standardize_column(DesignColumn& col);

}  // namespace abund
