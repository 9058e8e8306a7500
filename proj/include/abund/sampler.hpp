// MCMC machinery: adaptive random-walk Metropolis for scalars and field
// sites, an automated factor slice sampler for county count trajectories,
// conjugate inverse-gamma draws for variances, chain orchestration, and
// posterior summaries.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "abund/common.hpp"
#include "abund/graph.hpp"
#include "abund/model.hpp"
#include "abund/rng.hpp"

namespace abund {

struct AdaptOptions {
  int interval = 50;            // iterations per adaptation batch
  double target_scalar = 0.44;  // acceptance target for one-dimensional moves
  double target_block = 0.234;  // acceptance target for joint proposals
};

struct SliceOptions {
  int max_stepout = 8;                 // total interval expansions per factor
  std::vector<double> initial_widths;  // per year; empty uses a prior-sd rule
  double width_scale = 2.5;            // widths as multiples of factor sd
};

struct SamplerConfig {
  long long n_iterations = 8000;
  long long n_burnin = 4000;
  int thin = 2;
  int n_chains = 2;
  uint64_t rng_seed = 1;  // chain c uses rng_seed + c
  AdaptOptions adapt;
  SliceOptions slice;
  bool monitor_cells = true;  // include per-cell N, lambda, p columns

  void validate() const;
};

struct AcceptanceStat {
  std::string group;
  double rate = 0.0;
  long long proposals = 0;
};

struct ChainOutput {
  int chain_index = 0;
  std::vector<std::string> columns;
  long long n_kept = 0;
  std::vector<double> draws;  // row-major, n_kept x columns.size()
  std::vector<double> log_posterior_trace;
  std::vector<AcceptanceStat> acceptance;  // post burn-in rates
  double mean_slice_evals = 0.0;           // per county update
  long long centering_deferrals = 0;
  double final_log_posterior_tracked = 0.0;
  double final_log_posterior_recomputed = 0.0;

  double value(long long row, size_t col) const {
    return draws[row * columns.size() + col];
  }
  int column_index(const std::string& name) const;  // -1 when absent
};

// Proposal-scale bookkeeping for a group of scalar sites sharing one name.
// Scales adapt per site toward the target rate in fixed-size batches, with
// diminishing steps, and freeze when adapt() stops being called.
struct MhGroup {
  std::string name;
  double target = 0.44;
  std::vector<double> log_scale;
  std::vector<int> batch_acc;
  std::vector<int> batch_prop;
  long long acc = 0;
  long long prop = 0;

  MhGroup(std::string name_, int size, double init_scale, double target_ = 0.44);
  double scale(int s) const;
  void record(int s, bool accepted, bool counting);
  void adapt(long long batch_index);
};

// One sweep of per-site random-walk Metropolis over an ICAR x AR(1) field.
// data_loglik(i, t, value) is the data-side log likelihood tied to the site;
// the prior side comes from the joint kernel terms involving the site.
// Returns the accepted change in the joint log target.
double icar_field_mh_sweep(Field& x, double phi, double tau2,
                           const AdjacencyGraph& g,
                           const std::function<double(int, int, double)>& data_loglik,
                           MhGroup& mh, Rng& rng, bool counting);

// Subtracts each year-slice mean in place; returns the subtracted means.
// Leaves the joint ICAR x AR(1) kernel unchanged because the Laplacian
// annihilates constant vectors.
std::vector<double> center_field(Field& x);

// Automated factor slice sampler over one county trajectory. The sampler
// walks a persistent continuous embedding whose rounding is the integer
// state; slice levels come from the target at the rounded point. Factor
// directions and widths adapt to the running covariance of the embedding
// during burn-in via refresh() and stay fixed afterwards.
class FactorSlice {
 public:
  FactorSlice(int dim, const SliceOptions& opt, std::vector<double> init_widths);

  // logtarget receives the rounded trajectory; returns target evaluations.
  int update(std::vector<double>& x,
             const std::function<double(const std::vector<long long>&)>& logtarget,
             Rng& rng);
  void observe(const std::vector<double>& x);
  void refresh();
  int dim() const { return dim_; }

 private:
  int dim_;
  SliceOptions opt_;
  std::vector<double> widths_;
  std::vector<double> factors_;  // column-major dim x dim, orthonormal
  long long n_obs_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;  // Welford sum of outer products
  std::vector<long long> round_buf_;
  std::vector<double> x_buf_;
};

// Feasible starting state: latent counts at the survey-implied expectation
// clamped to the censoring bounds, fields at zero, variances at one,
// autocorrelations at one half, coefficients at zero, detection intercepts
// at the pooled crude detection fraction.
ModelState initial_state(const SurveillancePanel& panel,
                         const SurveyEstimates& survey,
                         const AdjacencyGraph& graph);

class Chain {
 public:
  Chain(const SurveillancePanel& panel, const SurveyEstimates& survey,
        const AdjacencyGraph& graph, const SamplerConfig& cfg, int chain_index);

  ModelState& state() { return state_; }
  const ModelState& state() const { return state_; }
  const std::vector<std::string>& columns() const { return columns_; }

  void run(ChainOutput& out);

  // Update stages, exposed so each can be verified in isolation.
  int update_latent_counts_county(int i);
  void update_latent_counts();
  void update_risk_field();
  void update_detection_field(int k);
  void update_iid_effects();
  void update_scalar_params();
  void update_variances();
  void update_latent_covariates();
  void sweep(bool counting);
  void adapt_batch();
  void freeze_adaptation() { frozen_ = true; }

  double tracked_log_posterior() const { return lp_; }
  double recompute_log_posterior() const;
  void reset_tracked();
  long long centering_deferrals() const { return centering_deferrals_; }
  void record_row(std::vector<double>& row) const;

 private:
  const SurveillancePanel& panel_;
  const SurveyEstimates& survey_;
  const AdjacencyGraph& graph_;
  SamplerConfig cfg_;
  int chain_index_;
  Rng rng_;
  ModelState state_;
  double lp_ = 0.0;
  bool frozen_ = false;
  bool counting_ = false;
  long long batch_count_ = 0;

  std::vector<std::vector<double>> embed_;  // county trajectory embeddings
  std::vector<FactorSlice> slice_;
  long long slice_evals_ = 0;
  long long slice_updates_ = 0;
  long long centering_deferrals_ = 0;

  MhGroup mh_u_, mh_v_;
  std::vector<MhGroup> mh_f_, mh_eps_, mh_mu_det_, mh_beta_det_;
  MhGroup mh_gamma_, mh_trend_, mh_phi_;
  std::vector<MhGroup> mh_omega_, mh_omega_t_;

  std::vector<std::string> columns_;

  // Per latent-covariate site, the observation rows whose windows touch it.
  struct OmegaRefs {
    std::vector<int> one_year;
    std::vector<int> five_year;
  };
  std::vector<std::vector<OmegaRefs>> omega_refs_;

  void build_columns();
  long long count_lower_bound(int i, int t) const;
  double county_loglik(int i, const std::vector<long long>& Nv,
                       const std::vector<double>& pdet,
                       const std::vector<double>& rate) const;
  void center_risk_field();
  void center_detection_field(int k);
  double latent_block() const;  // sum of latent-count terms over all cells
  double outcome_block(int k) const;
  friend struct ChainTestAccess;
};

ChainOutput run_chain(const SurveillancePanel& panel, const SurveyEstimates& survey,
                      const AdjacencyGraph& graph, const SamplerConfig& cfg,
                      int chain_index = 0);

// All chains, seeded rng_seed + index, run on separate threads.
std::vector<ChainOutput> run_chains(const SurveillancePanel& panel,
                                    const SurveyEstimates& survey,
                                    const AdjacencyGraph& graph,
                                    const SamplerConfig& cfg);

// Pooled posterior summaries in column order: mean, sd, equal-tail 95%
// interval by inverse-empirical-CDF order statistics, pooled draw count.
std::vector<PosteriorSummary> summarize(const std::vector<ChainOutput>& chains);

// Split-chain potential scale reduction per column (each chain halved).
// Constant columns report 1.
std::vector<double> split_rhat(const std::vector<ChainOutput>& chains);

// Inverse-empirical-CDF (type 1) quantile: the ceil(n q)-th order statistic.
double quantile_type1(std::vector<double> v, double q);

}  // namespace abund
