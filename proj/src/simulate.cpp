#include "abund/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "abund/likelihood.hpp"
#include "abund/rng.hpp"

namespace abund {

std::vector<int> ScenarioConfig::effective_survey_years() const {
  if (!survey_years.empty()) return survey_years;
  std::vector<int> all(T);
  for (int t = 0; t < T; ++t) all[t] = t + 1;
  return all;
}

void ScenarioConfig::validate() const {
  if (grid_rows < 2 || grid_cols < 2) {
    throw ValidationError("scenario grid must be at least 2x2");
  }
  if (T < 1) throw ValidationError("scenario needs at least one year");
  if (n_replicates < 1) throw ValidationError("scenario needs at least one replicate");
  if (!(pop_min >= 2 && pop_max >= pop_min)) {
    throw ValidationError("population bounds must satisfy 2 <= pop_min <= pop_max");
  }
  if (!(survey_se > 0.0)) throw ValidationError("survey_se must be positive");
  int K_ = K();
  if (K_ < 1) throw ValidationError("scenario needs at least one outcome");
  auto need = [&](size_t got, const char* what) {
    if (static_cast<int>(got) != K_) {
      throw ValidationError(std::string("scenario field ") + what +
                            " must have one entry per outcome");
    }
  };
  need(mu_det_trend.size(), "mu_det_trend");
  need(beta_det.size(), "beta_det");
  need(tau2_f.size(), "tau2_f");
  need(phi_f.size(), "phi_f");
  need(sigma2_eps.size(), "sigma2_eps");
  for (int t = 1; t <= T; ++t) {
    double mu = beta0_mu + beta1_mu * t;
    if (!(mu > 0.0 && mu < 1.0)) {
      throw ValidationError("scenario prevalence trend leaves (0,1) at year " +
                            std::to_string(t));
    }
  }
  auto years = effective_survey_years();
  if (years.size() < 2) {
    throw ValidationError("at least two survey years are needed to identify the trend");
  }
  for (int y : years) {
    if (y < 1 || y > T) throw ValidationError("survey year outside the panel");
  }
  for (double t2 : tau2_f) {
    if (!(t2 >= 0.0)) throw ValidationError("field variances must be nonnegative");
  }
  for (double ph : phi_f) {
    if (!(ph >= 0.0 && ph < 1.0)) throw ValidationError("phi must lie in [0,1)");
  }
  for (double s2 : sigma2_eps) {
    if (!(s2 >= 0.0)) throw ValidationError("residual variances must be nonnegative");
  }
  if (!(tau2_u >= 0.0 && sigma2_v >= 0.0)) {
    throw ValidationError("risk variances must be nonnegative");
  }
  if (!(phi_u >= 0.0 && phi_u < 1.0)) throw ValidationError("phi must lie in [0,1)");
}

namespace {

// One intrinsic-autoregressive innovation slice by sequential conditional
// simulation: repeated sweeps of the site conditionals d_i | d_-i ~
// N(mean of neighbor values, tau2 / w_i) starting from zero, then slice
// centering. The sweeps converge geometrically on the non-constant
// subspace and centering removes the free level.
void draw_icar_slice(const AdjacencyGraph& g, double tau2, Rng& rng,
                     std::vector<double>& d) {
  int n = g.n_regions;
  d.assign(n, 0.0);
  if (tau2 <= 0.0) return;
  for (int sweep = 0; sweep < 120; ++sweep) {
    for (int i = 0; i < n; ++i) {
      double m = 0.0;
      for (int j : g.neighbors[i]) m += d[j];
      double w = static_cast<double>(g.neighbors[i].size());
      d[i] = m / w + rng.normal() * std::sqrt(tau2 / w);
    }
  }
  double mean = 0.0;
  for (double e : d) mean += e;
  mean /= n;
  for (double& e : d) e -= mean;
}

Field draw_icar_ar1(const AdjacencyGraph& g, int T, double tau2, double phi,
                    Rng& rng) {
  int n = g.n_regions;
  Field x(n, T, 0.0);
  std::vector<double> innov;
  for (int t = 0; t < T; ++t) {
    draw_icar_slice(g, tau2, rng, innov);
    for (int i = 0; i < n; ++i) {
      x(i, t) = (t > 0 ? phi * x(i, t - 1) : 0.0) + innov[i];
    }
  }
  return x;
}

Field draw_iid(int n, int T, double sigma2, Rng& rng) {
  Field x(n, T, 0.0);
  double sd = std::sqrt(sigma2);
  for (double& e : x.data) e = sd * rng.normal();
  return x;
}

}  // namespace

SimData simulate_dataset(const ScenarioConfig& sc, uint64_t seed, SimTruth* truth) {
  sc.validate();
  SimData out;
  out.graph = build_grid_adjacency(sc.grid_rows, sc.grid_cols);
  int n = out.graph.n_regions, T = sc.T, K = sc.K();
  Rng rng(mix_seed(seed, 7));

  SurveillancePanel& panel = out.panel;
  panel.n = n;
  panel.T = T;
  panel.region_labels = out.graph.region_labels;
  panel.population = IntField(n, T, 0);
  double log_lo = std::log(static_cast<double>(sc.pop_min));
  double log_hi = std::log(static_cast<double>(sc.pop_max));
  for (int i = 0; i < n; ++i) {
    long long pop = std::llround(std::exp(log_lo + rng.uniform() * (log_hi - log_lo)));
    pop = std::clamp(pop, sc.pop_min, sc.pop_max);
    for (int t = 0; t < T; ++t) panel.population(i, t) = pop;
  }
  auto draw_columns = [&](Design& design, const std::string& stem, size_t count) {
    for (size_t c = 0; c < count; ++c) {
      DesignColumn col;
      col.name = stem + std::to_string(c + 1);
      col.values = Field(n, T, 0.0);
      col.active.assign(T, 1);
      for (double& v : col.values.data) v = rng.normal();
      standardize_column(col);
      design.cols.push_back(std::move(col));
    }
  };
  draw_columns(panel.risk_design, "w", sc.gamma.size());
  panel.outcomes.resize(K);
  for (int k = 0; k < K; ++k) {
    OutcomeData& y = panel.outcomes[k];
    y.name = "y" + std::to_string(k + 1);
    y.censorable = (k == 0);
    y.counts = IntField(n, T, 0);
    draw_columns(y.design, "x" + std::to_string(k + 1) + "_", sc.beta_det[k].size());
  }

  // Truth parameters live in a model state so the linear predictors reuse
  // the model's own link functions over the standardized designs.
  ModelState ts;
  ts.N = IntField(n, T, 0);
  ts.gamma = sc.gamma;
  ts.beta0_mu = sc.beta0_mu;
  ts.beta1_mu = sc.beta1_mu;
  ts.mu_det.resize(K);
  ts.beta_det.resize(K);
  for (int k = 0; k < K; ++k) {
    ts.beta_det[k] = sc.beta_det[k];
    ts.mu_det[k].resize(T);
    for (int t = 0; t < T; ++t) {
      ts.mu_det[k][t] = sc.mu_det_base[k] + sc.mu_det_trend[k] * t;
    }
  }
  ts.sigma2_eps = sc.sigma2_eps;
  ts.tau2_f = sc.tau2_f;
  ts.phi_f = sc.phi_f;
  ts.tau2_u = sc.tau2_u;
  ts.phi_u = sc.phi_u;
  ts.sigma2_v = sc.sigma2_v;
  ts.f.resize(K);
  ts.eps.resize(K);
  for (int k = 0; k < K; ++k) {
    ts.f[k] = draw_icar_ar1(out.graph, T, sc.tau2_f[k], sc.phi_f[k], rng);
    ts.eps[k] = draw_iid(n, T, sc.sigma2_eps[k], rng);
  }

  // Risk effects slice by slice; a slice whose rate mu_t * lambda leaves
  // (0,1) anywhere is redrawn up to a cap.
  ts.u = Field(n, T, 0.0);
  ts.v = Field(n, T, 0.0);
  std::vector<double> innov;
  double v_sd = std::sqrt(sc.sigma2_v);
  for (int t = 0; t < T; ++t) {
    double mu_t = statewide_mean(sc.beta0_mu, sc.beta1_mu, t + 1);
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      draw_icar_slice(out.graph, sc.tau2_u, rng, innov);
      ok = true;
      for (int i = 0; i < n; ++i) {
        ts.u(i, t) = (t > 0 ? sc.phi_u * ts.u(i, t - 1) : 0.0) + innov[i];
        ts.v(i, t) = v_sd * rng.normal();
        double rate = mu_t * relative_risk(ts, panel, i, t);
        if (!(rate > 0.0 && rate < 1.0)) ok = false;
      }
    }
    if (!ok) {
      throw std::runtime_error("could not draw a feasible risk slice at year " +
                               std::to_string(t + 1));
    }
  }

  if (truth) {
    truth->N = IntField(n, T, 0);
    truth->lambda = Field(n, T, 0.0);
    truth->p.assign(K, Field(n, T, 0.0));
    truth->mu_t.resize(T);
    truth->beta0_mu = sc.beta0_mu;
    truth->beta1_mu = sc.beta1_mu;
    truth->mu_det = ts.mu_det;
  }
  for (int t = 0; t < T; ++t) {
    double mu_t = statewide_mean(sc.beta0_mu, sc.beta1_mu, t + 1);
    if (truth) truth->mu_t[t] = mu_t;
    for (int i = 0; i < n; ++i) {
      double lam = relative_risk(ts, panel, i, t);
      long long N = rng.binomial(panel.population(i, t), mu_t * lam);
      ts.N(i, t) = N;
      if (truth) {
        truth->N(i, t) = N;
        truth->lambda(i, t) = lam;
      }
      for (int k = 0; k < K; ++k) {
        double pk = detection_prob(ts, panel, i, t, k);
        if (truth) truth->p[k](i, t) = pk;
        panel.outcomes[k].counts(i, t) = rng.binomial(N, pk);
      }
    }
  }
  for (int t = 1; t <= T; ++t) {
    double mu_t = statewide_mean(sc.beta0_mu, sc.beta1_mu, t);
    SurveyRow row;
    row.a = t;
    row.b = t;
    row.se = sc.survey_se;
    row.estimate = rng.trunc_normal(mu_t, sc.survey_se, 0.0, 1.0);
    out.survey.rows.push_back(row);
  }
  panel.validate(out.graph);
  out.survey.validate();
  return out;
}

void apply_age_split_censoring(SurveillancePanel& panel, int k,
                               double juvenile_frac, Rng& rng) {
  OutcomeData& od = panel.outcomes.at(k);
  if (!od.censorable) throw ValidationError("outcome is not censorable");
  od.censor.assign(static_cast<size_t>(panel.n) * panel.T, 0);
  auto in_band = [](long long x) { return x >= 1 && x <= 9; };
  for (int t = 0; t < panel.T; ++t) {
    for (int i = 0; i < panel.n; ++i) {
      long long y = od.counts(i, t);
      long long juv = rng.binomial(y, juvenile_frac);
      long long adult = y - juv;
      size_t cell = static_cast<size_t>(t) * panel.n + i;
      if (in_band(juv) && in_band(adult)) {
        od.censor[cell] = 2;
        od.counts(i, t) = 0;
      } else if (in_band(juv)) {
        od.censor[cell] = 1;
        od.counts(i, t) = adult;
      } else if (in_band(adult)) {
        od.censor[cell] = 1;
        od.counts(i, t) = juv;
      }
    }
  }
}

namespace {

void wls_cell(const SurveyEstimates& survey, double* b0, double* b1) {
  double sw = 0, swc = 0, swcc = 0, sws = 0, swcs = 0;
  for (const SurveyRow& r : survey.rows) {
    double w = 1.0 / (r.se * r.se);
    double c = survey_mean_coeff(r.a, r.b);
    sw += w;
    swc += w * c;
    swcc += w * c * c;
    sws += w * r.estimate;
    swcs += w * c * r.estimate;
  }
  double det = sw * swcc - swc * swc;
  *b0 = (swcc * sws - swc * swcs) / det;
  *b1 = (sw * swcs - swc * sws) / det;
}

}  // namespace

TrendFit baseline_estimate(const SurveyEstimates& survey) {
  survey.validate();
  double c0 = 0.0, c1 = 0.0;
  wls_cell(survey, &c0, &c1);
  auto scan = [&](double b0_lo, double b0_step, int n0, double b1_lo, double b1_step,
                  int n1) {
    TrendFit best;
    double best_ll = kNegInf;
    for (int a = 0; a < n0; ++a) {
      double b0 = b0_lo + a * b0_step;
      for (int b = 0; b < n1; ++b) {
        double b1 = b1_lo + b * b1_step;
        double ll = survey_loglik(survey, b0, b1);
        if (ll > best_ll) {
          best_ll = ll;
          best.beta0 = b0;
          best.beta1 = b1;
        }
      }
    }
    return best;
  };
  // Coarse pass over a window around the least-squares solution, then the
  // final pass at the target resolution; both grids sit on absolute
  // multiples of their steps so on-grid optima are recovered exactly.
  auto anchor = [](double x, double step) { return std::floor(x / step) * step; };
  TrendFit coarse = scan(anchor(c0 - 0.05, 1e-3), 1e-3, 101,
                         anchor(c1 - 0.02, 1e-4), 1e-4, 401);
  return scan(anchor(coarse.beta0 - 2e-3, 1e-4), 1e-4, 41,
              anchor(coarse.beta1 - 2e-4, 1e-5), 1e-5, 41);
}

SurveyEstimates subset_survey(const SurveyEstimates& survey,
                              const std::vector<int>& years) {
  SurveyEstimates out;
  for (const SurveyRow& r : survey.rows) {
    for (int y : years) {
      if (r.a == y && r.b == y) {
        out.rows.push_back(r);
        break;
      }
    }
  }
  out.validate();
  return out;
}

std::vector<ChainOutput> fit_single_outcome(const SurveillancePanel& panel,
                                            const SurveyEstimates& survey,
                                            const AdjacencyGraph& graph,
                                            const SamplerConfig& cfg, int k) {
  if (k < 0 || k >= panel.K()) throw ValidationError("single-outcome index out of range");
  SurveillancePanel reduced = panel;
  reduced.outcomes = {panel.outcomes[k]};
  return run_chains(reduced, survey, graph, cfg);
}

CellEstimates extract_cells(const std::vector<PosteriorSummary>& summaries,
                            const SurveillancePanel& panel) {
  CellEstimates out;
  out.n_mean = Field(panel.n, panel.T, 0.0);
  out.n_lo = Field(panel.n, panel.T, 0.0);
  out.n_hi = Field(panel.n, panel.T, 0.0);
  out.lambda_mean = Field(panel.n, panel.T, 1.0);
  std::unordered_map<std::string, int> region;
  for (int i = 0; i < panel.n; ++i) region[panel.region_labels[i]] = i;
  auto parse_cell = [&](const std::string& name, size_t prefix, int* i, int* t) {
    size_t close = name.size() - 1;
    size_t colon = name.rfind(':');
    if (name[prefix] != '[' || name[close] != ']' || colon == std::string::npos) return false;
    auto it = region.find(name.substr(prefix + 1, colon - prefix - 1));
    if (it == region.end()) return false;
    *i = it->second;
    *t = std::stoi(name.substr(colon + 1, close - colon - 1)) - 1;
    return *t >= 0 && *t < panel.T;
  };
  for (const PosteriorSummary& s : summaries) {
    int i = 0, t = 0;
    if (s.name.rfind("N[", 0) == 0 && parse_cell(s.name, 1, &i, &t)) {
      out.n_mean(i, t) = s.mean;
      out.n_lo(i, t) = s.lower;
      out.n_hi(i, t) = s.upper;
      out.has_intervals = true;
    } else if (s.name.rfind("lambda[", 0) == 0 && parse_cell(s.name, 6, &i, &t)) {
      out.lambda_mean(i, t) = s.mean;
    }
  }
  return out;
}

CellEstimates baseline_cells(const TrendFit& fit, const SurveillancePanel& panel) {
  CellEstimates out;
  out.n_mean = Field(panel.n, panel.T, 0.0);
  out.n_lo = Field(panel.n, panel.T, 0.0);
  out.n_hi = Field(panel.n, panel.T, 0.0);
  out.lambda_mean = Field(panel.n, panel.T, 1.0);
  out.has_intervals = false;
  for (int t = 0; t < panel.T; ++t) {
    double mu_t = std::clamp(statewide_mean(fit.beta0, fit.beta1, t + 1), 0.0, 1.0);
    for (int i = 0; i < panel.n; ++i) {
      out.n_mean(i, t) = mu_t * static_cast<double>(panel.population(i, t));
    }
  }
  return out;
}

ReplicateScore score(const SimTruth& truth, const CellEstimates& est) {
  ReplicateScore s;
  int n = truth.N.n, T = truth.N.T;
  double cells = static_cast<double>(n) * T;
  double cover = 0.0, sse_n = 0.0, sse_l = 0.0;
  std::vector<double> rel;
  rel.reserve(static_cast<size_t>(n) * T);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < n; ++i) {
      double tn = static_cast<double>(truth.N(i, t));
      double dn = est.n_mean(i, t) - tn;
      sse_n += dn * dn;
      double dl = est.lambda_mean(i, t) - truth.lambda(i, t);
      sse_l += dl * dl;
      rel.push_back(std::abs(dn) / std::max(tn, 1.0));
      if (est.has_intervals && est.n_lo(i, t) <= tn && tn <= est.n_hi(i, t)) {
        cover += 1.0;
      }
    }
  }
  s.coverage = est.has_intervals ? cover / cells : 0.0;
  s.rmse_n = std::sqrt(sse_n / cells);
  s.rmse_lambda = std::sqrt(sse_l / cells);
  s.rel_mae_n = quantile_type1(rel, 0.5);
  return s;
}

std::vector<double> EvaluationReport::collect(ReplicateScore ReplicateResult::*model,
                                              double ReplicateScore::*metric) const {
  std::vector<double> out;
  out.reserve(replicates.size());
  for (const ReplicateResult& r : replicates) out.push_back((r.*model).*metric);
  return out;
}

int EvaluationReport::wins(double ReplicateScore::*metric,
                           ReplicateScore ReplicateResult::*challenger) const {
  int w = 0;
  for (const ReplicateResult& r : replicates) {
    if (r.proposed.*metric < (r.*challenger).*metric) ++w;
  }
  return w;
}

double EvaluationReport::mean_metric(ReplicateScore ReplicateResult::*model,
                                     double ReplicateScore::*metric) const {
  std::vector<double> v = collect(model, metric);
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / v.size();
}

double EvaluationReport::median_metric(ReplicateScore ReplicateResult::*model,
                                       double ReplicateScore::*metric) const {
  std::vector<double> v = collect(model, metric);
  return v.empty() ? 0.0 : quantile_type1(v, 0.5);
}

double EvaluationReport::coverage_rate_beta0() const {
  double c = 0.0;
  for (const ReplicateResult& r : replicates) c += r.cover_beta0 ? 1.0 : 0.0;
  return replicates.empty() ? 0.0 : c / replicates.size();
}

double EvaluationReport::coverage_rate_beta1() const {
  double c = 0.0;
  for (const ReplicateResult& r : replicates) c += r.cover_beta1 ? 1.0 : 0.0;
  return replicates.empty() ? 0.0 : c / replicates.size();
}

double EvaluationReport::coverage_rate_mu_det() const {
  double c = 0.0, m = 0.0;
  for (const ReplicateResult& r : replicates) {
    for (uint8_t f : r.cover_mu_det) {
      c += f ? 1.0 : 0.0;
      m += 1.0;
    }
  }
  return m > 0.0 ? c / m : 0.0;
}

namespace {

ReplicateResult run_replicate(const EvalOptions& opts, int rep) {
  const ScenarioConfig& sc = opts.scenario;
  uint64_t seed_r = mix_seed(opts.seed, static_cast<uint64_t>(rep) + 1);
  SimTruth truth;
  SimData data = simulate_dataset(sc, seed_r, &truth);
  SurveyEstimates sfit = subset_survey(data.survey, sc.effective_survey_years());
  TrendFit base = baseline_estimate(sfit);

  ReplicateResult res;
  res.replicate = rep;
  SamplerConfig cfg = opts.fit;
  cfg.rng_seed = mix_seed(seed_r, 101);
  auto chains = run_chains(data.panel, sfit, data.graph, cfg);
  auto summ = summarize(chains);
  res.proposed = score(truth, extract_cells(summ, data.panel));
  res.baseline = score(truth, baseline_cells(base, data.panel));

  auto check_cover = [&](const std::string& name, double value, bool* flag) {
    for (const PosteriorSummary& s : summ) {
      if (s.name == name) {
        *flag = s.lower <= value && value <= s.upper;
        return;
      }
    }
    *flag = false;
  };
  check_cover("beta0_mu", truth.beta0_mu, &res.cover_beta0);
  check_cover("beta1_mu", truth.beta1_mu, &res.cover_beta1);
  res.cover_mu_det.assign(static_cast<size_t>(sc.K()) * sc.T, 0);
  for (int k = 0; k < sc.K(); ++k) {
    for (int t = 0; t < sc.T; ++t) {
      bool flag = false;
      check_cover("muDet" + std::to_string(k + 1) + "[" + std::to_string(t + 1) + "]",
                  truth.mu_det[k][t], &flag);
      res.cover_mu_det[static_cast<size_t>(k) * sc.T + t] = flag ? 1 : 0;
    }
  }

  if (opts.run_single && sc.K() > 1) {
    int k = std::clamp(opts.single_outcome, 0, sc.K() - 1);
    SamplerConfig cfgs = opts.fit;
    cfgs.rng_seed = mix_seed(seed_r, 202);
    auto sch = fit_single_outcome(data.panel, sfit, data.graph, cfgs, k);
    res.single = score(truth, extract_cells(summarize(sch), data.panel));
    res.has_single = true;
  }
  return res;
}

}  // namespace

EvaluationReport run_evaluation(const EvalOptions& opts) {
  opts.scenario.validate();
  opts.fit.validate();
  int M = opts.scenario.n_replicates;
  EvaluationReport report;
  report.replicates.resize(M);
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  int n_threads = opts.threads > 0 ? opts.threads : std::max(1, hw);
  n_threads = std::min(n_threads, M);
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(n_threads);
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (int w = 0; w < n_threads; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (;;) {
          int rep = next.fetch_add(1);
          if (rep >= M) break;
          report.replicates[rep] = run_replicate(opts, rep);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return report;
}

}  // namespace abund
