#include "abund/sampler.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "abund/likelihood.hpp"

namespace abund {

void SamplerConfig::validate() const {
  if (n_iterations < 1) throw ValidationError("n_iterations must be positive");
  if (n_burnin < 0 || n_burnin >= n_iterations) {
    throw ValidationError("n_burnin must lie in [0, n_iterations)");
  }
  if (thin < 1) throw ValidationError("thin must be at least 1");
  if (n_iterations - n_burnin < thin) {
    throw ValidationError("no draws would be retained after thinning");
  }
  if (n_chains < 1) throw ValidationError("n_chains must be positive");
  if (adapt.interval < 1) throw ValidationError("adaptation interval must be positive");
  if (!(adapt.target_scalar > 0.0 && adapt.target_scalar < 1.0) ||
      !(adapt.target_block > 0.0 && adapt.target_block < 1.0)) {
    throw ValidationError("acceptance targets must lie in (0,1)");
  }
  if (slice.max_stepout < 1) throw ValidationError("max_stepout must be positive");
  if (!(slice.width_scale > 0.0)) throw ValidationError("width_scale must be positive");
  for (double w : slice.initial_widths) {
    if (!(w > 0.0)) throw ValidationError("slice widths must be positive");
  }
}

int ChainOutput::column_index(const std::string& name) const {
  for (size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] == name) return static_cast<int>(c);
  }
  return -1;
}

MhGroup::MhGroup(std::string name_, int size, double init_scale, double target_)
    : name(std::move(name_)),
      target(target_),
      log_scale(size, std::log(init_scale)),
      batch_acc(size, 0),
      batch_prop(size, 0) {}

double MhGroup::scale(int s) const { return std::exp(log_scale[s]); }

void MhGroup::record(int s, bool accepted, bool counting) {
  batch_prop[s] += 1;
  batch_acc[s] += accepted ? 1 : 0;
  if (counting) {
    prop += 1;
    acc += accepted ? 1 : 0;
  }
}

void MhGroup::adapt(long long batch_index) {
  double step = std::min(0.1, 1.0 / std::sqrt(static_cast<double>(batch_index)));
  for (size_t s = 0; s < log_scale.size(); ++s) {
    if (batch_prop[s] > 0) {
      double rate = static_cast<double>(batch_acc[s]) / batch_prop[s];
      log_scale[s] += rate > target ? step : -step;
      log_scale[s] = std::clamp(log_scale[s], -20.0, 10.0);
    }
    batch_acc[s] = 0;
    batch_prop[s] = 0;
  }
}

double icar_field_mh_sweep(Field& x, double phi, double tau2,
                           const AdjacencyGraph& g,
                           const std::function<double(int, int, double)>& data_loglik,
                           MhGroup& mh, Rng& rng, bool counting) {
  double total = 0.0;
  double inv2t = 1.0 / (2.0 * tau2);
  for (int t = 0; t < x.T; ++t) {
    for (int i = 0; i < x.n; ++i) {
      int s = t * x.n + i;
      double cur = x(i, t);
      double cand = cur + mh.scale(s) * rng.normal();
      double lp_cur = -icar_site_quadform(x, i, t, cur, phi, g) * inv2t + data_loglik(i, t, cur);
      double lp_cand = -icar_site_quadform(x, i, t, cand, phi, g) * inv2t + data_loglik(i, t, cand);
      double delta = lp_cand - lp_cur;
      bool accept = lp_cand > kNegInf && std::log(rng.uniform()) < delta;
      if (accept) {
        x(i, t) = cand;
        total += delta;
      }
      mh.record(s, accept, counting);
    }
  }
  return total;
}

std::vector<double> center_field(Field& x) {
  std::vector<double> means(x.T, 0.0);
  for (int t = 0; t < x.T; ++t) {
    double* s = x.slice(t);
    double m = 0.0;
    for (int i = 0; i < x.n; ++i) m += s[i];
    m /= x.n;
    for (int i = 0; i < x.n; ++i) s[i] -= m;
    means[t] = m;
  }
  return means;
}

FactorSlice::FactorSlice(int dim, const SliceOptions& opt, std::vector<double> init_widths)
    : dim_(dim),
      opt_(opt),
      widths_(std::move(init_widths)),
      factors_(static_cast<size_t>(dim) * dim, 0.0),
      mean_(dim, 0.0),
      m2_(static_cast<size_t>(dim) * dim, 0.0),
      round_buf_(dim, 0),
      x_buf_(dim, 0.0) {
  for (int d = 0; d < dim_; ++d) factors_[static_cast<size_t>(d) * dim_ + d] = 1.0;
  widths_.resize(dim_, 2.0);
}

int FactorSlice::update(std::vector<double>& x,
                        const std::function<double(const std::vector<long long>&)>& logtarget,
                        Rng& rng) {
  int evals = 0;
  auto eval_point = [&](const std::vector<double>& xv) {
    for (int d = 0; d < dim_; ++d) round_buf_[d] = std::llround(xv[d]);
    ++evals;
    return logtarget(round_buf_);
  };
  double logh = eval_point(x);
  if (!(logh > kNegInf)) return evals;  // infeasible start; leave untouched
  for (int fct = 0; fct < dim_; ++fct) {
    const double* dir = &factors_[static_cast<size_t>(fct) * dim_];
    double w = widths_[fct];
    double level = logh + std::log(rng.uniform());
    double lo = -w * rng.uniform();
    double hi = lo + w;
    auto eval_offset = [&](double s) {
      for (int d = 0; d < dim_; ++d) x_buf_[d] = x[d] + s * dir[d];
      return eval_point(x_buf_);
    };
    // Randomized expansion budget keeps the interval placement reversible.
    int grow_lo = static_cast<int>(rng.uniform() * opt_.max_stepout);
    int grow_hi = opt_.max_stepout - 1 - grow_lo;
    while (grow_lo-- > 0 && eval_offset(lo) > level) lo -= w;
    while (grow_hi-- > 0 && eval_offset(hi) > level) hi += w;
    for (int it = 0; it < 1000; ++it) {
      double s = lo + rng.uniform() * (hi - lo);
      double val = eval_offset(s);
      if (val > level) {
        for (int d = 0; d < dim_; ++d) x[d] = x_buf_[d];
        logh = val;
        break;
      }
      // Shrink toward the current point, which always satisfies the level.
      if (s < 0.0) {
        lo = s;
      } else {
        hi = s;
      }
    }
  }
  return evals;
}

void FactorSlice::observe(const std::vector<double>& x) {
  n_obs_ += 1;
  double inv_n = 1.0 / static_cast<double>(n_obs_);
  for (int d = 0; d < dim_; ++d) x_buf_[d] = x[d] - mean_[d];
  for (int d = 0; d < dim_; ++d) mean_[d] += x_buf_[d] * inv_n;
  for (int a = 0; a < dim_; ++a) {
    double post_a = x[a] - mean_[a];
    for (int b = 0; b <= a; ++b) {
      m2_[static_cast<size_t>(a) * dim_ + b] += x_buf_[b] * post_a;
    }
  }
}

void FactorSlice::refresh() {
  if (n_obs_ < std::max(10, dim_ + 2)) return;
  Eigen::MatrixXd cov(dim_, dim_);
  double inv = 1.0 / static_cast<double>(n_obs_ - 1);
  for (int a = 0; a < dim_; ++a) {
    for (int b = 0; b <= a; ++b) {
      double c = m2_[static_cast<size_t>(a) * dim_ + b] * inv;
      cov(a, b) = c;
      cov(b, a) = c;
    }
    cov(a, a) += 1e-8;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) return;
  for (int f = 0; f < dim_; ++f) {
    double ev = std::max(eig.eigenvalues()[f], 1e-12);
    widths_[f] = std::max(1.0, opt_.width_scale * std::sqrt(ev));
    for (int d = 0; d < dim_; ++d) {
      factors_[static_cast<size_t>(f) * dim_ + d] = eig.eigenvectors()(d, f);
    }
  }
}

namespace {

double clamp_prob(double p) {
  if (p < 1e-15) return 1e-15;
  if (p > 1.0 - 1e-15) return 1.0 - 1e-15;
  return p;
}

double outcome_cell_ll(const OutcomeData& y, int i, int t, long long n, double p) {
  if (y.censorable) return treatment_loglik(y.censor_at(i, t), y.count_at(i, t), n, p);
  return death_loglik(y.count_at(i, t), n, p);
}

long long cell_count_lower(const SurveillancePanel& p, int i, int t) {
  long long lo = 0;
  for (const OutcomeData& y : p.outcomes) {
    switch (y.censor_at(i, t)) {
      case 0:
        lo = std::max(lo, y.count_at(i, t));
        break;
      case 1:
        lo = std::max(lo, y.count_at(i, t) + 1);
        break;
      case 2:
        lo = std::max(lo, 2LL);
        break;
      default:
        break;
    }
  }
  return lo;
}

double std_col_value(const DesignColumn& col, const SurveillancePanel& p,
                     const ModelState& s, int i, int t) {
  double raw;
  if (col.acs_index >= 0) {
    raw = s.acs[col.acs_index].omega(i, p.acs[col.acs_index].lt(t + 1));
  } else {
    raw = col.values(i, t);
  }
  return (raw - col.center) / col.scale;
}

double weighted_survey_mean(const SurveyEstimates& survey) {
  double num = 0.0, den = 0.0;
  for (const SurveyRow& r : survey.rows) {
    double w = 1.0 / (r.se * r.se);
    num += w * r.estimate;
    den += w;
  }
  return num / den;
}

}  // namespace

ModelState initial_state(const SurveillancePanel& panel,
                         const SurveyEstimates& survey,
                         const AdjacencyGraph& graph) {
  (void)graph;
  ModelState s;
  int n = panel.n, T = panel.T, K = panel.K();
  double sbar = weighted_survey_mean(survey);
  s.beta0_mu = sbar;
  s.beta1_mu = 0.0;
  s.N = IntField(n, T, 0);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < n; ++i) {
      long long pop = panel.population(i, t);
      long long lo = cell_count_lower(panel, i, t);
      if (lo > pop) {
        throw ValidationError("no feasible latent count at region '" +
                              panel.region_labels[i] + "', year " + std::to_string(t + 1));
      }
      long long guess = std::llround(static_cast<double>(pop) * sbar);
      s.N(i, t) = std::clamp(guess, lo, pop);
    }
  }
  s.u = Field(n, T, 0.0);
  s.v = Field(n, T, 0.0);
  s.f.assign(K, Field(n, T, 0.0));
  s.eps.assign(K, Field(n, T, 0.0));
  s.gamma.assign(panel.risk_design.cols.size(), 0.0);
  s.mu_det.resize(K);
  s.beta_det.resize(K);
  s.sigma2_eps.assign(K, 1.0);
  s.tau2_f.assign(K, 1.0);
  s.phi_f.assign(K, 0.5);
  for (int k = 0; k < K; ++k) {
    const OutcomeData& y = panel.outcomes[k];
    s.beta_det[k].assign(y.design.cols.size(), 0.0);
    double num = 0.0, den = 0.0;
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < n; ++i) {
        switch (y.censor_at(i, t)) {
          case 0: num += static_cast<double>(y.count_at(i, t)); break;
          case 1: num += static_cast<double>(y.count_at(i, t)) + 5.0; break;
          case 2: num += 10.0; break;
          default: break;
        }
        den += static_cast<double>(s.N(i, t));
      }
    }
    double frac = den > 0.0 ? num / den : 0.5;
    frac = std::clamp(frac, 1e-6, 1.0 - 1e-6);
    s.mu_det[k].assign(T, logit(frac));
  }
  s.tau2_u = 1.0;
  s.phi_u = 0.5;
  s.sigma2_v = 1.0;
  s.acs.resize(panel.acs.size());
  for (size_t a = 0; a < panel.acs.size(); ++a) {
    const AcsVariableData& ad = panel.acs[a];
    AcsVariableState& av = s.acs[a];
    int L = ad.n_years();
    av.omega = Field(n, L, 0.0);
    Field weight(n, L, 0.0);
    double global_sum = 0.0;
    long long global_cnt = 0;
    auto add = [&](int i, int lt, double value) {
      av.omega(i, lt) += value;
      weight(i, lt) += 1.0;
      global_sum += value;
      ++global_cnt;
    };
    for (const AcsRow& r : ad.one_year) add(r.i, ad.lt(r.t), r.value);
    for (const AcsRow& r : ad.five_year) {
      for (int t = r.t - 4; t <= r.t; ++t) add(r.i, ad.lt(t), r.value);
    }
    double fallback = global_cnt > 0 ? global_sum / global_cnt : 50.0;
    for (int lt = 0; lt < L; ++lt) {
      for (int i = 0; i < n; ++i) {
        double w = weight(i, lt);
        double val = w > 0.0 ? av.omega(i, lt) / w : fallback;
        av.omega(i, lt) = std::clamp(val, 0.5, 99.5);
      }
    }
    av.omega_t.assign(L, 0.0);
    for (int lt = 0; lt < L; ++lt) {
      double m = 0.0;
      for (int i = 0; i < n; ++i) m += av.omega(i, lt);
      av.omega_t[lt] = std::clamp(m / n, 0.5, 99.5);
    }
    av.tau2.assign(n, 1.0);
  }
  return s;
}

Chain::Chain(const SurveillancePanel& panel, const SurveyEstimates& survey,
             const AdjacencyGraph& graph, const SamplerConfig& cfg, int chain_index)
    : panel_(panel),
      survey_(survey),
      graph_(graph),
      cfg_(cfg),
      chain_index_(chain_index),
      rng_(cfg.rng_seed + static_cast<uint64_t>(chain_index)),
      state_(initial_state(panel, survey, graph)),
      mh_u_("u", panel.n * panel.T, 0.5),
      mh_v_("v", panel.n * panel.T, 0.5),
      mh_gamma_("gamma", static_cast<int>(panel.risk_design.cols.size()), 0.1),
      mh_trend_("trend", 3, 0.005),
      mh_phi_("phi", 1 + panel.K(), 0.5) {
  cfg_.validate();
  if (!cfg_.slice.initial_widths.empty() &&
      static_cast<int>(cfg_.slice.initial_widths.size()) != panel.T) {
    throw ValidationError("slice initial_widths must have one entry per year");
  }
  int n = panel.n, T = panel.T, K = panel.K();
  mh_trend_.log_scale[1] = std::log(0.001);
  mh_trend_.log_scale[2] = std::log(0.001);
  for (int k = 0; k < K; ++k) {
    std::string kk = std::to_string(k + 1);
    mh_f_.emplace_back("f" + kk, n * T, 0.5);
    mh_eps_.emplace_back("eps" + kk, n * T, 0.5);
    mh_mu_det_.emplace_back("muDet" + kk, T, 0.2);
    mh_beta_det_.emplace_back("betaDet" + kk,
                              static_cast<int>(panel.outcomes[k].design.cols.size()), 0.1);
  }
  for (size_t a = 0; a < panel.acs.size(); ++a) {
    const AcsVariableData& ad = panel.acs[a];
    mh_omega_.emplace_back("omega:" + ad.name, n * ad.n_years(), 1.0);
    mh_omega_t_.emplace_back("omegaT:" + ad.name, ad.n_years(), 0.3);
  }
  // Latent count embeddings start at the integer state.
  embed_.resize(n);
  double sbar = state_.beta0_mu;
  for (int i = 0; i < n; ++i) {
    embed_[i].resize(T);
    std::vector<double> widths(T);
    for (int t = 0; t < T; ++t) {
      embed_[i][t] = static_cast<double>(state_.N(i, t));
      if (!cfg_.slice.initial_widths.empty()) {
        widths[t] = cfg_.slice.initial_widths[t];
      } else {
        double pr = std::clamp(sbar, 1e-4, 1.0 - 1e-4);
        double sd = std::sqrt(static_cast<double>(panel.population(i, t)) * pr * (1.0 - pr));
        widths[t] = std::clamp(0.5 * sd, 2.0, 1e4);
      }
    }
    slice_.emplace_back(T, cfg_.slice, widths);
  }
  // Observation rows indexed by the latent site their window touches.
  omega_refs_.resize(panel.acs.size());
  for (size_t a = 0; a < panel.acs.size(); ++a) {
    const AcsVariableData& ad = panel.acs[a];
    omega_refs_[a].resize(static_cast<size_t>(n) * ad.n_years());
    for (size_t r = 0; r < ad.one_year.size(); ++r) {
      const AcsRow& row = ad.one_year[r];
      omega_refs_[a][static_cast<size_t>(ad.lt(row.t)) * n + row.i].one_year.push_back(
          static_cast<int>(r));
    }
    for (size_t r = 0; r < ad.five_year.size(); ++r) {
      const AcsRow& row = ad.five_year[r];
      for (int t = row.t - 4; t <= row.t; ++t) {
        omega_refs_[a][static_cast<size_t>(ad.lt(t)) * n + row.i].five_year.push_back(
            static_cast<int>(r));
      }
    }
  }
  build_columns();
  reset_tracked();
  if (lp_ == kNegInf) {
    throw ValidationError("initial state has zero posterior density");
  }
}

void Chain::build_columns() {
  columns_.clear();
  int n = panel_.n, T = panel_.T, K = panel_.K();
  columns_.push_back("beta0_mu");
  columns_.push_back("beta1_mu");
  for (int t = 1; t <= T; ++t) columns_.push_back("mu[" + std::to_string(t) + "]");
  columns_.push_back("tau2_u");
  columns_.push_back("phi_u");
  columns_.push_back("sigma2_v");
  for (const DesignColumn& col : panel_.risk_design.cols) {
    columns_.push_back("gamma[" + col.name + "]");
  }
  for (int k = 0; k < K; ++k) {
    std::string kk = std::to_string(k + 1);
    for (int t = 1; t <= T; ++t) {
      columns_.push_back("muDet" + kk + "[" + std::to_string(t) + "]");
    }
    for (const DesignColumn& col : panel_.outcomes[k].design.cols) {
      columns_.push_back("betaDet" + kk + "[" + col.name + "]");
    }
    columns_.push_back("tau2_f" + kk);
    columns_.push_back("phi_f" + kk);
    columns_.push_back("sigma2_eps" + kk);
  }
  for (size_t a = 0; a < panel_.acs.size(); ++a) {
    const AcsVariableData& ad = panel_.acs[a];
    for (int t = ad.t_min; t <= ad.t_max; ++t) {
      columns_.push_back("omegaT:" + ad.name + "[" + std::to_string(t) + "]");
    }
    for (int i = 0; i < n; ++i) {
      columns_.push_back("tau2om:" + ad.name + "[" + panel_.region_labels[i] + "]");
    }
  }
  if (cfg_.monitor_cells) {
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < n; ++i) {
        std::string cell = "[" + panel_.region_labels[i] + ":" + std::to_string(t + 1) + "]";
        columns_.push_back("N" + cell);
        columns_.push_back("lambda" + cell);
        for (int k = 0; k < K; ++k) {
          columns_.push_back("p" + std::to_string(k + 1) + cell);
        }
      }
    }
  }
}

void Chain::record_row(std::vector<double>& row) const {
  row.clear();
  row.reserve(columns_.size());
  int n = panel_.n, T = panel_.T, K = panel_.K();
  row.push_back(state_.beta0_mu);
  row.push_back(state_.beta1_mu);
  for (int t = 1; t <= T; ++t) {
    row.push_back(statewide_mean(state_.beta0_mu, state_.beta1_mu, t));
  }
  row.push_back(state_.tau2_u);
  row.push_back(state_.phi_u);
  row.push_back(state_.sigma2_v);
  for (double gcoef : state_.gamma) row.push_back(gcoef);
  for (int k = 0; k < K; ++k) {
    for (int t = 0; t < T; ++t) row.push_back(state_.mu_det[k][t]);
    for (double b : state_.beta_det[k]) row.push_back(b);
    row.push_back(state_.tau2_f[k]);
    row.push_back(state_.phi_f[k]);
    row.push_back(state_.sigma2_eps[k]);
  }
  for (size_t a = 0; a < panel_.acs.size(); ++a) {
    const AcsVariableState& av = state_.acs[a];
    for (double w : av.omega_t) row.push_back(w);
    for (int i = 0; i < n; ++i) row.push_back(av.tau2[i]);
  }
  if (cfg_.monitor_cells) {
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < n; ++i) {
        row.push_back(static_cast<double>(state_.N(i, t)));
        row.push_back(relative_risk(state_, panel_, i, t));
        for (int k = 0; k < K; ++k) {
          row.push_back(detection_prob(state_, panel_, i, t, k));
        }
      }
    }
  }
}

double Chain::recompute_log_posterior() const {
  return log_posterior(state_, panel_, survey_, graph_);
}

void Chain::reset_tracked() { lp_ = recompute_log_posterior(); }

long long Chain::count_lower_bound(int i, int t) const {
  return cell_count_lower(panel_, i, t);
}

double Chain::county_loglik(int i, const std::vector<long long>& Nv,
                            const std::vector<double>& pdet,
                            const std::vector<double>& rate) const {
  int T = panel_.T, K = panel_.K();
  double acc = 0.0;
  for (int t = 0; t < T; ++t) {
    long long nv = Nv[t];
    long long pop = panel_.population(i, t);
    if (nv < 0 || nv > pop) return kNegInf;
    acc += latent_count_loglik(nv, pop, rate[t]);
    if (acc == kNegInf) return kNegInf;
    for (int k = 0; k < K; ++k) {
      acc += outcome_cell_ll(panel_.outcomes[k], i, t, nv, pdet[static_cast<size_t>(k) * T + t]);
      if (acc == kNegInf) return kNegInf;
    }
  }
  return acc;
}

int Chain::update_latent_counts_county(int i) {
  int T = panel_.T, K = panel_.K();
  std::vector<double> rate(T), pdet(static_cast<size_t>(K) * T);
  for (int t = 0; t < T; ++t) {
    rate[t] = statewide_mean(state_.beta0_mu, state_.beta1_mu, t + 1) *
              relative_risk(state_, panel_, i, t);
    for (int k = 0; k < K; ++k) {
      pdet[static_cast<size_t>(k) * T + t] = detection_prob(state_, panel_, i, t, k);
    }
  }
  std::vector<long long> cur(T);
  for (int t = 0; t < T; ++t) cur[t] = state_.N(i, t);
  double h_old = county_loglik(i, cur, pdet, rate);
  auto target = [&](const std::vector<long long>& Nv) {
    return county_loglik(i, Nv, pdet, rate);
  };
  int evals = slice_[i].update(embed_[i], target, rng_);
  std::vector<long long> next(T);
  for (int t = 0; t < T; ++t) next[t] = std::llround(embed_[i][t]);
  double h_new = county_loglik(i, next, pdet, rate);
  for (int t = 0; t < T; ++t) state_.N(i, t) = next[t];
  lp_ += h_new - h_old;
  if (!frozen_) slice_[i].observe(embed_[i]);
  slice_evals_ += evals + 2;
  slice_updates_ += 1;
  return evals;
}

void Chain::update_latent_counts() {
  for (int i = 0; i < panel_.n; ++i) update_latent_counts_county(i);
}

double Chain::latent_block() const {
  double acc = 0.0;
  for (int t = 0; t < panel_.T; ++t) {
    for (int i = 0; i < panel_.n; ++i) {
      acc += cell_latent_loglik(state_, panel_, i, t);
      if (acc == kNegInf) return kNegInf;
    }
  }
  return acc;
}

double Chain::outcome_block(int k) const {
  double acc = 0.0;
  for (int t = 0; t < panel_.T; ++t) {
    for (int i = 0; i < panel_.n; ++i) {
      acc += cell_outcome_loglik(state_, panel_, i, t, k);
      if (acc == kNegInf) return kNegInf;
    }
  }
  return acc;
}

void Chain::center_risk_field() {
  int n = panel_.n, T = panel_.T;
  std::vector<double> means(T, 0.0);
  for (int t = 0; t < T; ++t) {
    const double* s = state_.u.slice(t);
    double m = 0.0;
    for (int i = 0; i < n; ++i) m += s[i];
    means[t] = m / n;
  }
  double before = 0.0, after = 0.0;
  for (int t = 0; t < T; ++t) {
    double mu_t = statewide_mean(state_.beta0_mu, state_.beta1_mu, t + 1);
    for (int i = 0; i < n; ++i) {
      double lrr = log_relative_risk(state_, panel_, i, t);
      long long nv = state_.N(i, t), pop = panel_.population(i, t);
      before += latent_count_loglik(nv, pop, mu_t * std::exp(lrr));
      double shifted = latent_count_loglik(nv, pop, mu_t * std::exp(lrr - means[t]));
      if (shifted == kNegInf) {
        ++centering_deferrals_;
        return;
      }
      after += shifted;
    }
  }
  for (int t = 0; t < T; ++t) {
    double* s = state_.u.slice(t);
    for (int i = 0; i < n; ++i) s[i] -= means[t];
  }
  lp_ += after - before;
}

void Chain::update_risk_field() {
  auto data_ll = [this](int i, int t, double val) {
    double lbase = log_relative_risk(state_, panel_, i, t) - state_.u(i, t);
    double rate = statewide_mean(state_.beta0_mu, state_.beta1_mu, t + 1) * std::exp(lbase + val);
    return latent_count_loglik(state_.N(i, t), panel_.population(i, t), rate);
  };
  lp_ += icar_field_mh_sweep(state_.u, state_.phi_u, state_.tau2_u, graph_, data_ll,
                             mh_u_, rng_, counting_);
  center_risk_field();
}

void Chain::center_detection_field(int k) {
  int n = panel_.n, T = panel_.T;
  double before = outcome_block(k);
  std::vector<double> means(T, 0.0);
  for (int t = 0; t < T; ++t) {
    const double* s = state_.f[k].slice(t);
    double m = 0.0;
    for (int i = 0; i < n; ++i) m += s[i];
    means[t] = m / n;
  }
  for (int t = 0; t < T; ++t) {
    double* s = state_.f[k].slice(t);
    for (int i = 0; i < n; ++i) s[i] -= means[t];
  }
  double after = outcome_block(k);
  lp_ += after - before;
}

void Chain::update_detection_field(int k) {
  auto data_ll = [this, k](int i, int t, double val) {
    double base = detection_logit(state_, panel_, i, t, k) - state_.f[k](i, t);
    double p = clamp_prob(inv_logit(base + val));
    return outcome_cell_ll(panel_.outcomes[k], i, t, state_.N(i, t), p);
  };
  lp_ += icar_field_mh_sweep(state_.f[k], state_.phi_f[k], state_.tau2_f[k], graph_,
                             data_ll, mh_f_[k], rng_, counting_);
  center_detection_field(k);
}

void Chain::update_iid_effects() {
  int n = panel_.n, T = panel_.T, K = panel_.K();
  double sdv = std::sqrt(state_.sigma2_v);
  for (int t = 0; t < T; ++t) {
    double mu_t = statewide_mean(state_.beta0_mu, state_.beta1_mu, t + 1);
    for (int i = 0; i < n; ++i) {
      int s = t * n + i;
      double cur = state_.v(i, t);
      double cand = cur + mh_v_.scale(s) * rng_.normal();
      double lbase = log_relative_risk(state_, panel_, i, t) - cur;
      long long nv = state_.N(i, t), pop = panel_.population(i, t);
      double lp_cur = latent_count_loglik(nv, pop, mu_t * std::exp(lbase + cur)) +
                      normal_logpdf(cur, 0.0, sdv);
      double lp_cand = latent_count_loglik(nv, pop, mu_t * std::exp(lbase + cand)) +
                       normal_logpdf(cand, 0.0, sdv);
      bool accept = lp_cand > kNegInf && std::log(rng_.uniform()) < lp_cand - lp_cur;
      if (accept) {
        state_.v(i, t) = cand;
        lp_ += lp_cand - lp_cur;
      }
      mh_v_.record(s, accept, counting_);
    }
  }
  for (int k = 0; k < K; ++k) {
    double sde = std::sqrt(state_.sigma2_eps[k]);
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < n; ++i) {
        int s = t * n + i;
        double cur = state_.eps[k](i, t);
        double cand = cur + mh_eps_[k].scale(s) * rng_.normal();
        double base = detection_logit(state_, panel_, i, t, k) - cur;
        long long nv = state_.N(i, t);
        double lp_cur = outcome_cell_ll(panel_.outcomes[k], i, t, nv,
                                        clamp_prob(inv_logit(base + cur))) +
                        normal_logpdf(cur, 0.0, sde);
        double lp_cand = outcome_cell_ll(panel_.outcomes[k], i, t, nv,
                                         clamp_prob(inv_logit(base + cand))) +
                         normal_logpdf(cand, 0.0, sde);
        bool accept = lp_cand > kNegInf && std::log(rng_.uniform()) < lp_cand - lp_cur;
        if (accept) {
          state_.eps[k](i, t) = cand;
          lp_ += lp_cand - lp_cur;
        }
        mh_eps_[k].record(s, accept, counting_);
      }
    }
  }
}

namespace {

// Random-walk Metropolis on an unconstrained scalar. target returns the
// full conditional log density; lp accumulates the accepted change.
void mh_scalar(double& x, MhGroup& grp, int s, Rng& rng, bool counting, double& lp,
               const std::function<double(double)>& target) {
  double cur = x;
  double cand = cur + grp.scale(s) * rng.normal();
  double t0 = target(cur);
  double t1 = target(cand);
  bool accept = t1 > kNegInf && std::log(rng.uniform()) < t1 - t0;
  if (accept) {
    x = cand;
    lp += t1 - t0;
  }
  grp.record(s, accept, counting);
}

// Random walk on logit((x-lo)/(hi-lo)) for a scalar with a uniform prior
// on (lo, hi); the Jacobian keeps the natural-scale target invariant.
void mh_scalar_logit(double& x, double lo, double hi, MhGroup& grp, int s, Rng& rng,
                     bool counting, double& lp,
                     const std::function<double(double)>& target) {
  double span = hi - lo;
  double cur = x;
  double z = logit((cur - lo) / span);
  double zc = z + grp.scale(s) * rng.normal();
  double cand = lo + span * inv_logit(zc);
  bool accept = false;
  if (cand > lo && cand < hi) {
    double t0 = target(cur);
    double t1 = target(cand);
    double j0 = std::log(cur - lo) + std::log(hi - cur);
    double j1 = std::log(cand - lo) + std::log(hi - cand);
    accept = t1 > kNegInf && std::log(rng.uniform()) < (t1 + j1) - (t0 + j0);
    if (accept) {
      x = cand;
      lp += t1 - t0;
    }
  }
  grp.record(s, accept, counting);
}

}  // namespace

void Chain::update_scalar_params() {
  int n = panel_.n, T = panel_.T, K = panel_.K();
  // Yearly detection intercepts.
  for (int k = 0; k < K; ++k) {
    for (int t = 0; t < T; ++t) {
      std::vector<double> base(n);
      for (int i = 0; i < n; ++i) {
        base[i] = detection_logit(state_, panel_, i, t, k) - state_.mu_det[k][t];
      }
      auto target = [&](double val) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
          acc += outcome_cell_ll(panel_.outcomes[k], i, t, state_.N(i, t),
                                 clamp_prob(inv_logit(base[i] + val)));
          if (acc == kNegInf) return acc;
        }
        return acc;
      };
      mh_scalar(state_.mu_det[k][t], mh_mu_det_[k], t, rng_, counting_, lp_, target);
    }
  }
  // Detection covariate coefficients.
  for (int k = 0; k < K; ++k) {
    const Design& des = panel_.outcomes[k].design;
    for (int c = 0; c < des.size(); ++c) {
      const DesignColumn& col = des.cols[c];
      auto target = [&](double val) {
        double acc = 0.0;
        for (int t = 0; t < T; ++t) {
          if (!col.active[t]) continue;
          for (int i = 0; i < n; ++i) {
            double xv = std_col_value(col, panel_, state_, i, t);
            double base = detection_logit(state_, panel_, i, t, k) -
                          state_.beta_det[k][c] * xv;
            acc += outcome_cell_ll(panel_.outcomes[k], i, t, state_.N(i, t),
                                   clamp_prob(inv_logit(base + val * xv)));
            if (acc == kNegInf) return acc;
          }
        }
        return acc;
      };
      mh_scalar(state_.beta_det[k][c], mh_beta_det_[k], c, rng_, counting_, lp_, target);
    }
  }
  // Risk covariate coefficients.
  for (int c = 0; c < panel_.risk_design.size(); ++c) {
    const DesignColumn& col = panel_.risk_design.cols[c];
    auto target = [&](double val) {
      double acc = 0.0;
      for (int t = 0; t < T; ++t) {
        if (!col.active[t]) continue;
        double mu_t = statewide_mean(state_.beta0_mu, state_.beta1_mu, t + 1);
        for (int i = 0; i < n; ++i) {
          double xv = std_col_value(col, panel_, state_, i, t);
          double lbase = log_relative_risk(state_, panel_, i, t) - state_.gamma[c] * xv;
          acc += latent_count_loglik(state_.N(i, t), panel_.population(i, t),
                                     mu_t * std::exp(lbase + val * xv));
          if (acc == kNegInf) return acc;
        }
      }
      return acc;
    };
    mh_scalar(state_.gamma[c], mh_gamma_, c, rng_, counting_, lp_, target);
  }
  // Prevalence trend; the relative risks do not depend on it, so cache them.
  {
    Field lrr(n, T, 0.0);
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < n; ++i) lrr(i, t) = log_relative_risk(state_, panel_, i, t);
    }
    auto trend_target = [&](double b0, double b1) {
      double acc = survey_loglik(survey_, b0, b1);
      if (acc == kNegInf) return acc;
      for (int t = 0; t < T; ++t) {
        double mu_t = statewide_mean(b0, b1, t + 1);
        for (int i = 0; i < n; ++i) {
          acc += latent_count_loglik(state_.N(i, t), panel_.population(i, t),
                                     mu_t * std::exp(lrr(i, t)));
          if (acc == kNegInf) return acc;
        }
      }
      return acc;
    };
    auto t0 = [&](double val) { return trend_target(val, state_.beta1_mu); };
    mh_scalar(state_.beta0_mu, mh_trend_, 0, rng_, counting_, lp_, t0);
    auto t1 = [&](double val) { return trend_target(state_.beta0_mu, val); };
    mh_scalar(state_.beta1_mu, mh_trend_, 1, rng_, counting_, lp_, t1);
    // The counts pin the mid-panel mean far harder than the slope, so the
    // coordinate walk crawls along a (beta0, beta1) ridge. Rotating the line
    // about the panel midpoint moves the slope while holding that mean, and
    // adaptation stretches this step out to the survey-limited width.
    {
      double tbar = 0.5 * (T + 1);
      double delta = mh_trend_.scale(2) * rng_.normal();
      double b0c = state_.beta0_mu - delta * tbar;
      double b1c = state_.beta1_mu + delta;
      double cur = trend_target(state_.beta0_mu, state_.beta1_mu);
      double cand = trend_target(b0c, b1c);
      bool accept = cand > kNegInf && std::log(rng_.uniform()) < cand - cur;
      if (accept) {
        state_.beta0_mu = b0c;
        state_.beta1_mu = b1c;
        lp_ += cand - cur;
      }
      mh_trend_.record(2, accept, counting_);
    }
  }
  // Temporal autocorrelations, uniform(0,1) priors.
  {
    auto target_u = [&](double val) {
      return -icar_quadform(state_.u, val, graph_) / (2.0 * state_.tau2_u);
    };
    mh_scalar_logit(state_.phi_u, 0.0, 1.0, mh_phi_, 0, rng_, counting_, lp_, target_u);
    for (int k = 0; k < K; ++k) {
      auto target_f = [&](double val) {
        return -icar_quadform(state_.f[k], val, graph_) / (2.0 * state_.tau2_f[k]);
      };
      mh_scalar_logit(state_.phi_f[k], 0.0, 1.0, mh_phi_, 1 + k, rng_, counting_, lp_, target_f);
    }
  }
}

void Chain::update_variances() {
  int n = panel_.n, T = panel_.T, K = panel_.K();
  double cells = static_cast<double>(n) * T;
  auto gibbs = [&](double& var, double shape_add, double scale_add,
                   const std::function<double(double)>& block) {
    double old = var;
    double next = rng_.inv_gamma(0.5 + shape_add, 0.5 + scale_add);
    lp_ += inv_gamma_logpdf(next, 0.5, 0.5) + block(next) -
           inv_gamma_logpdf(old, 0.5, 0.5) - block(old);
    var = next;
  };
  {
    double ssq = 0.0;
    for (double e : state_.v.data) ssq += e * e;
    auto block = [&](double s2) {
      return -0.5 * cells * (std::log(2.0 * 3.14159265358979323846) + std::log(s2)) -
             ssq / (2.0 * s2);
    };
    gibbs(state_.sigma2_v, cells / 2.0, ssq / 2.0, block);
  }
  for (int k = 0; k < K; ++k) {
    double ssq = 0.0;
    for (double e : state_.eps[k].data) ssq += e * e;
    auto block = [&](double s2) {
      return -0.5 * cells * (std::log(2.0 * 3.14159265358979323846) + std::log(s2)) -
             ssq / (2.0 * s2);
    };
    gibbs(state_.sigma2_eps[k], cells / 2.0, ssq / 2.0, block);
  }
  {
    double q = icar_quadform(state_.u, state_.phi_u, graph_);
    double rank = static_cast<double>(T) * (n - 1);
    auto block = [&](double t2) { return -q / (2.0 * t2) - 0.5 * rank * std::log(t2); };
    gibbs(state_.tau2_u, rank / 2.0, q / 2.0, block);
  }
  for (int k = 0; k < K; ++k) {
    double q = icar_quadform(state_.f[k], state_.phi_f[k], graph_);
    double rank = static_cast<double>(T) * (n - 1);
    auto block = [&](double t2) { return -q / (2.0 * t2) - 0.5 * rank * std::log(t2); };
    gibbs(state_.tau2_f[k], rank / 2.0, q / 2.0, block);
  }
  // County process variances of the latent covariates. The draw treats the
  // (0,100) truncation normalizer as constant; the tracked density change
  // uses the exact terms.
  for (size_t a = 0; a < state_.acs.size(); ++a) {
    AcsVariableState& av = state_.acs[a];
    int L = panel_.acs[a].n_years();
    for (int i = 0; i < n; ++i) {
      double ssq = 0.0;
      for (int lt = 0; lt < L; ++lt) {
        double d = av.omega(i, lt) - av.omega_t[lt];
        ssq += d * d;
      }
      auto block = [&](double t2) {
        double acc = 0.0;
        double sd = std::sqrt(t2);
        for (int lt = 0; lt < L; ++lt) {
          acc += truncnorm_logpdf(av.omega(i, lt), av.omega_t[lt], sd, 0.0, 100.0);
        }
        return acc;
      };
      gibbs(av.tau2[i], static_cast<double>(L) / 2.0, ssq / 2.0, block);
    }
  }
}

void Chain::update_latent_covariates() {
  int n = panel_.n, T = panel_.T;
  for (size_t a = 0; a < state_.acs.size(); ++a) {
    AcsVariableState& av = state_.acs[a];
    const AcsVariableData& ad = panel_.acs[a];
    int L = ad.n_years();
    // Risk design column fed by this variable, if any.
    int col_idx = -1;
    for (int c = 0; c < panel_.risk_design.size(); ++c) {
      if (panel_.risk_design.cols[c].acs_index == static_cast<int>(a)) col_idx = c;
    }
    for (int lt = 0; lt < L; ++lt) {
      int t_panel = lt + ad.t_min - 1;  // 0-based panel year
      for (int i = 0; i < n; ++i) {
        int s = lt * n + i;
        const OmegaRefs& refs = omega_refs_[a][s];
        double cur = av.omega(i, lt);
        bool in_design = col_idx >= 0 && t_panel >= 0 && t_panel < T &&
                         panel_.risk_design.cols[col_idx].active[t_panel];
        double tau_i = std::sqrt(av.tau2[i]);
        auto target = [&](double val) {
          double acc = truncnorm_logpdf(val, av.omega_t[lt], tau_i, 0.0, 100.0);
          if (acc == kNegInf) return acc;
          for (int r : refs.one_year) {
            acc += truncnorm_logpdf(ad.one_year[r].value, val, ad.one_year[r].se, 0.0, 100.0);
          }
          for (int r : refs.five_year) {
            const AcsRow& row = ad.five_year[r];
            double m = 0.0;
            for (int t = row.t - 4; t <= row.t; ++t) m += av.omega(i, ad.lt(t));
            m = (m - cur + val) / 5.0;
            acc += truncnorm_logpdf(row.value, m, row.se, 0.0, 100.0);
          }
          if (in_design) {
            const DesignColumn& col = panel_.risk_design.cols[col_idx];
            double coef = state_.gamma[col_idx];
            double lbase = log_relative_risk(state_, panel_, i, t_panel) -
                           coef * (cur - col.center) / col.scale;
            double mu_t = statewide_mean(state_.beta0_mu, state_.beta1_mu, t_panel + 1);
            double rate = mu_t * std::exp(lbase + coef * (val - col.center) / col.scale);
            acc += latent_count_loglik(state_.N(i, t_panel), panel_.population(i, t_panel), rate);
          }
          return acc;
        };
        mh_scalar(av.omega(i, lt), mh_omega_[a], s, rng_, counting_, lp_, target);
      }
    }
    for (int lt = 0; lt < L; ++lt) {
      auto target = [&](double val) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
          acc += truncnorm_logpdf(av.omega(i, lt), val, std::sqrt(av.tau2[i]), 0.0, 100.0);
          if (acc == kNegInf) return acc;
        }
        return acc;
      };
      mh_scalar_logit(av.omega_t[lt], 0.0, 100.0, mh_omega_t_[a], lt, rng_, counting_,
                      lp_, target);
    }
  }
}

void Chain::adapt_batch() {
  ++batch_count_;
  mh_u_.adapt(batch_count_);
  mh_v_.adapt(batch_count_);
  for (auto& g : mh_f_) g.adapt(batch_count_);
  for (auto& g : mh_eps_) g.adapt(batch_count_);
  for (auto& g : mh_mu_det_) g.adapt(batch_count_);
  for (auto& g : mh_beta_det_) g.adapt(batch_count_);
  mh_gamma_.adapt(batch_count_);
  mh_trend_.adapt(batch_count_);
  mh_phi_.adapt(batch_count_);
  for (auto& g : mh_omega_) g.adapt(batch_count_);
  for (auto& g : mh_omega_t_) g.adapt(batch_count_);
  for (auto& fs : slice_) fs.refresh();
}

void Chain::sweep(bool counting) {
  counting_ = counting;
  update_latent_counts();
  update_risk_field();
  for (int k = 0; k < panel_.K(); ++k) update_detection_field(k);
  update_iid_effects();
  update_scalar_params();
  update_variances();
  update_latent_covariates();
}

void Chain::run(ChainOutput& out) {
  out.chain_index = chain_index_;
  out.columns = columns_;
  out.n_kept = 0;
  out.draws.clear();
  out.log_posterior_trace.clear();
  std::vector<double> row;
  for (long long it = 1; it <= cfg_.n_iterations; ++it) {
    bool counting = it > cfg_.n_burnin;
    sweep(counting);
    if (!counting && it % cfg_.adapt.interval == 0) adapt_batch();
    if (it == cfg_.n_burnin) freeze_adaptation();
    if (counting && (it - cfg_.n_burnin) % cfg_.thin == 0) {
      record_row(row);
      out.draws.insert(out.draws.end(), row.begin(), row.end());
      out.log_posterior_trace.push_back(lp_);
      out.n_kept += 1;
    }
  }
  out.acceptance.clear();
  auto push_stats = [&](const MhGroup& g) {
    if (g.prop > 0) {
      out.acceptance.push_back({g.name, static_cast<double>(g.acc) / g.prop, g.prop});
    }
  };
  push_stats(mh_u_);
  push_stats(mh_v_);
  for (const auto& g : mh_f_) push_stats(g);
  for (const auto& g : mh_eps_) push_stats(g);
  for (const auto& g : mh_mu_det_) push_stats(g);
  for (const auto& g : mh_beta_det_) push_stats(g);
  push_stats(mh_gamma_);
  push_stats(mh_trend_);
  push_stats(mh_phi_);
  for (const auto& g : mh_omega_) push_stats(g);
  for (const auto& g : mh_omega_t_) push_stats(g);
  out.mean_slice_evals =
      slice_updates_ > 0 ? static_cast<double>(slice_evals_) / slice_updates_ : 0.0;
  out.centering_deferrals = centering_deferrals_;
  out.final_log_posterior_tracked = lp_;
  out.final_log_posterior_recomputed = recompute_log_posterior();
}

ChainOutput run_chain(const SurveillancePanel& panel, const SurveyEstimates& survey,
                      const AdjacencyGraph& graph, const SamplerConfig& cfg,
                      int chain_index) {
  Chain chain(panel, survey, graph, cfg, chain_index);
  ChainOutput out;
  chain.run(out);
  return out;
}

std::vector<ChainOutput> run_chains(const SurveillancePanel& panel,
                                    const SurveyEstimates& survey,
                                    const AdjacencyGraph& graph,
                                    const SamplerConfig& cfg) {
  cfg.validate();
  int C = cfg.n_chains;
  std::vector<ChainOutput> outs(C);
  std::vector<std::exception_ptr> errors(C);
  std::vector<std::thread> threads;
  threads.reserve(C);
  for (int c = 0; c < C; ++c) {
    threads.emplace_back([&, c]() {
      try {
        outs[c] = run_chain(panel, survey, graph, cfg, c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return outs;
}

double quantile_type1(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  long long nn = static_cast<long long>(v.size());
  long long k = static_cast<long long>(std::ceil(static_cast<double>(nn) * q - 1e-9));
  k = std::clamp(k, 1LL, nn);
  return v[k - 1];
}

std::vector<PosteriorSummary> summarize(const std::vector<ChainOutput>& chains) {
  std::vector<PosteriorSummary> out;
  if (chains.empty()) return out;
  const auto& cols = chains.front().columns;
  out.resize(cols.size());
  std::vector<double> pool;
  for (size_t c = 0; c < cols.size(); ++c) {
    pool.clear();
    for (const ChainOutput& ch : chains) {
      for (long long r = 0; r < ch.n_kept; ++r) pool.push_back(ch.value(r, c));
    }
    PosteriorSummary& s = out[c];
    s.name = cols[c];
    s.n_draws = static_cast<long long>(pool.size());
    if (pool.empty()) continue;
    double sum = 0.0;
    for (double x : pool) sum += x;
    s.mean = sum / pool.size();
    double ss = 0.0;
    for (double x : pool) ss += (x - s.mean) * (x - s.mean);
    s.sd = pool.size() > 1 ? std::sqrt(ss / (pool.size() - 1)) : 0.0;
    s.lower = quantile_type1(pool, 0.025);
    s.upper = quantile_type1(pool, 0.975);
  }
  return out;
}

std::vector<double> split_rhat(const std::vector<ChainOutput>& chains) {
  std::vector<double> out;
  if (chains.empty()) return out;
  size_t ncol = chains.front().columns.size();
  out.assign(ncol, 1.0);
  long long L = chains.front().n_kept / 2;
  for (const ChainOutput& ch : chains) L = std::min(L, ch.n_kept / 2);
  if (L < 2) return out;
  for (size_t c = 0; c < ncol; ++c) {
    std::vector<double> means, vars;
    for (const ChainOutput& ch : chains) {
      long long starts[2] = {0, ch.n_kept - L};
      for (long long s0 : starts) {
        double m = 0.0;
        for (long long r = 0; r < L; ++r) m += ch.value(s0 + r, c);
        m /= L;
        double v = 0.0;
        for (long long r = 0; r < L; ++r) {
          double d = ch.value(s0 + r, c) - m;
          v += d * d;
        }
        v /= (L - 1);
        means.push_back(m);
        vars.push_back(v);
      }
    }
    size_t m = means.size();
    double grand = 0.0;
    for (double x : means) grand += x;
    grand /= m;
    double B = 0.0;
    for (double x : means) B += (x - grand) * (x - grand);
    B = B * L / (m - 1);
    double W = 0.0;
    for (double x : vars) W += x;
    W /= m;
    if (W <= 1e-300) {
      out[c] = B <= 1e-300 ? 1.0 : std::numeric_limits<double>::infinity();
      continue;
    }
    double varplus = (static_cast<double>(L - 1) / L) * W + B / L;
    out[c] = std::sqrt(varplus / W);
  }
  return out;
}

}  // namespace abund
