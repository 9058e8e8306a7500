// Synthetic-data generator and the model comparison harness: draws panels
// from the generative process, fits the joint model, a single-outcome
// reduction, and a survey-only trend baseline, and scores county estimates
// against the generator truth.
#pragma once

#include <cstdint>
#include <vector>

#include "abund/model.hpp"
#include "abund/sampler.hpp"

namespace abund {

struct ScenarioConfig {
  int grid_rows = 6;
  int grid_cols = 6;
  int T = 5;
  int n_replicates = 20;
  std::vector<int> survey_years;  // empty means every year 1..T
  long long pop_min = 5000;
  long long pop_max = 50000;
  double survey_se = 0.003;
  double beta0_mu = 0.05;
  double beta1_mu = -0.001;
  std::vector<double> gamma{0.1};  // risk coefficients; one covariate each
  std::vector<std::vector<double>> beta_det{{0.15}, {0.15}};
  std::vector<double> mu_det_base{-1.8, -4.2};
  std::vector<double> mu_det_trend{0.05, 0.05};
  std::vector<double> tau2_f{0.05, 0.05};
  std::vector<double> phi_f{0.8, 0.8};
  std::vector<double> sigma2_eps{0.01, 0.01};
  double tau2_u = 0.1;
  double phi_u = 0.8;
  double sigma2_v = 0.01;

  int K() const { return static_cast<int>(mu_det_base.size()); }
  std::vector<int> effective_survey_years() const;
  void validate() const;
};

struct SimTruth {
  IntField N;
  Field lambda;
  std::vector<Field> p;
  std::vector<double> mu_t;  // per model year
  double beta0_mu = 0.0;
  double beta1_mu = 0.0;
  std::vector<std::vector<double>> mu_det;
};

struct SimData {
  AdjacencyGraph graph;
  SurveillancePanel panel;
  SurveyEstimates survey;  // one single-year row per panel year
};

// One synthetic panel with no censored cells. The survey always carries
// every year so that sparse designs, which subset rows at fit time, stay
// paired with yearly designs drawn from the same seed.
SimData simulate_dataset(const ScenarioConfig& sc, uint64_t seed, SimTruth* truth);

// Recodes a censorable outcome in place under the age-split suppression
// rule: each observed total is split into a juvenile and an adult component
// and any component falling in 1..9 is suppressed (both in band -> code 2
// with no count; exactly one in band -> code 1 keeping the other component).
void apply_age_split_censoring(SurveillancePanel& panel, int k,
                               double juvenile_frac, Rng& rng);

struct TrendFit {
  double beta0 = 0.0;
  double beta1 = 0.0;
};

// Survey-only prevalence trend: exact truncated-normal likelihood maximized
// by grid search at resolution 1e-4 (intercept) by 1e-5 (slope), the window
// centered on a weighted least squares pre-fit. Ties keep the first grid
// point scanned, so the result is deterministic.
TrendFit baseline_estimate(const SurveyEstimates& survey);

SurveyEstimates subset_survey(const SurveyEstimates& survey,
                              const std::vector<int>& years);

// Joint fit restricted to outcome k only.
std::vector<ChainOutput> fit_single_outcome(const SurveillancePanel& panel,
                                            const SurveyEstimates& survey,
                                            const AdjacencyGraph& graph,
                                            const SamplerConfig& cfg, int k);

struct CellEstimates {
  Field n_mean, n_lo, n_hi, lambda_mean;
  bool has_intervals = false;
};

CellEstimates extract_cells(const std::vector<PosteriorSummary>& summaries,
                            const SurveillancePanel& panel);

// Baseline county estimates: population times the fitted statewide mean,
// clamped to [0,1]; relative risk pinned at one; no intervals.
CellEstimates baseline_cells(const TrendFit& fit, const SurveillancePanel& panel);

struct ReplicateScore {
  double coverage = 0.0;  // share of cells whose 95% interval covers true N
  double rmse_n = 0.0;
  double rmse_lambda = 0.0;
  double rel_mae_n = 0.0;  // median over cells of |Nhat - N| / max(N, 1)
};

ReplicateScore score(const SimTruth& truth, const CellEstimates& est);

struct ReplicateResult {
  int replicate = 0;
  ReplicateScore proposed;
  ReplicateScore single;
  ReplicateScore baseline;
  bool has_single = false;
  bool cover_beta0 = false;
  bool cover_beta1 = false;
  std::vector<uint8_t> cover_mu_det;  // flattened [k][t]
};

struct EvalOptions {
  ScenarioConfig scenario;
  SamplerConfig fit;
  uint64_t seed = 1;
  int threads = 0;         // 0 picks the hardware concurrency
  bool run_single = true;
  int single_outcome = 1;  // outcome used by the single-outcome comparator
};

struct EvaluationReport {
  std::vector<ReplicateResult> replicates;

  std::vector<double> collect(ReplicateScore ReplicateResult::*model,
                              double ReplicateScore::*metric) const;
  int wins(double ReplicateScore::*metric,
           ReplicateScore ReplicateResult::*challenger) const;
  double mean_metric(ReplicateScore ReplicateResult::*model,
                     double ReplicateScore::*metric) const;
  double median_metric(ReplicateScore ReplicateResult::*model,
                       double ReplicateScore::*metric) const;
  double coverage_rate_beta0() const;
  double coverage_rate_beta1() const;
  double coverage_rate_mu_det() const;
};

// Replicates run in parallel; report order and content depend only on the
// seed and options.
EvaluationReport run_evaluation(const EvalOptions& opts);

}  // namespace abund
