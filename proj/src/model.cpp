#include "abund/model.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace abund {

double logit(double p) { return std::log(p) - std::log1p(-p); }

double inv_logit(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

double design_contribution(const Design& d, const std::vector<double>& coef,
                           const ModelState& s, const SurveillancePanel& p,
                           int i, int t) {
  double acc = 0.0;
  for (int c = 0; c < d.size(); ++c) {
    const DesignColumn& col = d.cols[c];
    if (!col.active[t]) continue;
    double raw;
    if (col.acs_index >= 0) {
      const AcsVariableData& ad = p.acs[col.acs_index];
      raw = s.acs[col.acs_index].omega(i, ad.lt(t + 1));
    } else {
      raw = col.values(i, t);
    }
    acc += coef[c] * (raw - col.center) / col.scale;
  }
  return acc;
}

}  // namespace

double detection_logit(const ModelState& s, const SurveillancePanel& p, int i,
                       int t, int k) {
  double x = s.mu_det[k][t];
  x += design_contribution(p.outcomes[k].design, s.beta_det[k], s, p, i, t);
  if (!s.f[k].empty()) x += s.f[k](i, t);
  if (!s.eps[k].empty()) x += s.eps[k](i, t);
  return x;
}

double detection_prob(const ModelState& s, const SurveillancePanel& p, int i,
                      int t, int k) {
  double pr = inv_logit(detection_logit(s, p, i, t, k));
  // Strictly interior: a saturated probability would zero out censored
  // interval masses spuriously.
  if (pr < 1e-15) pr = 1e-15;
  if (pr > 1.0 - 1e-15) pr = 1.0 - 1e-15;
  return pr;
}

double log_relative_risk(const ModelState& s, const SurveillancePanel& p,
                         int i, int t) {
  double x = design_contribution(p.risk_design, s.gamma, s, p, i, t);
  if (!s.u.empty()) x += s.u(i, t);
  if (!s.v.empty()) x += s.v(i, t);
  return x;
}

double relative_risk(const ModelState& s, const SurveillancePanel& p, int i,
                     int t) {
  return std::exp(log_relative_risk(s, p, i, t));
}

void standardize_column(DesignColumn& col) {
  double sum = 0.0, sum2 = 0.0;
  long long m = 0;
  for (int t = 0; t < col.values.T; ++t) {
    if (!col.active[t]) continue;
    for (int i = 0; i < col.values.n; ++i) {
      double x = col.values(i, t);
      sum += x;
      sum2 += x * x;
      ++m;
    }
  }
  if (m < 2) throw ValidationError("design column '" + col.name + "' has no active cells");
  double mean = sum / static_cast<double>(m);
  double var = (sum2 - sum * mean) / static_cast<double>(m - 1);
  if (!(var > 0.0)) {
    throw ValidationError("design column '" + col.name + "' is constant over active cells");
  }
  // Values stay raw; the transform is applied wherever the column enters a
  // linear predictor, and persists with the column for reporting.
  col.center = mean;
  col.scale = std::sqrt(var);
}

double survey_mean_coeff(int a, int b) {
  double aa = static_cast<double>(a);
  double bb = static_cast<double>(b);
  return (bb * bb + bb - aa * aa + aa) / (2.0 * (bb - aa + 1.0));
}

void SurveyEstimates::validate() const {
  if (rows.size() < 2) {
    throw ValidationError("survey needs at least two rows to identify a trend");
  }
  std::set<double> coeffs;
  for (size_t r = 0; r < rows.size(); ++r) {
    const SurveyRow& row = rows[r];
    std::string where = "survey row " + std::to_string(r + 1);
    if (row.a > row.b) throw ValidationError(where + ": span start exceeds end");
    if (!(row.estimate > 0.0 && row.estimate < 1.0)) {
      throw ValidationError(where + ": estimate must lie in (0,1)");
    }
    if (!(row.se > 0.0)) throw ValidationError(where + ": standard error must be positive");
    coeffs.insert(survey_mean_coeff(row.a, row.b));
  }
  if (coeffs.size() < 2) {
    throw ValidationError("survey spans are collinear; trend is not identified");
  }
}

namespace {

std::string cell_name(const SurveillancePanel& p, int i, int t) {
  return "region '" + p.region_labels[i] + "', year " + std::to_string(t + 1);
}

}  // namespace

void SurveillancePanel::validate(const AdjacencyGraph& g) const {
  if (n != g.n_regions) {
    throw ValidationError("panel has " + std::to_string(n) + " regions, adjacency has " +
                          std::to_string(g.n_regions));
  }
  if (T < 1) throw ValidationError("panel needs at least one year");
  if (static_cast<int>(region_labels.size()) != n) {
    throw ValidationError("panel region labels missing");
  }
  for (int i = 0; i < n; ++i) {
    if (region_labels[i] != g.region_labels[i]) {
      throw ValidationError("panel region order differs from adjacency at index " +
                            std::to_string(i));
    }
  }
  if (population.n != n || population.T != T) {
    throw ValidationError("population panel has wrong shape");
  }
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < n; ++i) {
      if (population(i, t) <= 0) {
        throw ValidationError("population must be positive at " + cell_name(*this, i, t));
      }
    }
  }
  for (const OutcomeData& y : outcomes) {
    if (y.counts.n != n || y.counts.T != T) {
      throw ValidationError("outcome '" + y.name + "' has wrong shape");
    }
    if (!y.censor.empty() && y.censor.size() != static_cast<size_t>(n) * T) {
      throw ValidationError("outcome '" + y.name + "' censor vector has wrong shape");
    }
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < n; ++i) {
        int c = y.censor_at(i, t);
        long long cnt = y.count_at(i, t);
        long long pop = population(i, t);
        std::string where = "outcome '" + y.name + "' at " + cell_name(*this, i, t);
        if (c != 0 && !y.censorable) {
          throw ValidationError(where + ": censor codes not allowed on this outcome");
        }
        switch (c) {
          case 0:
            if (cnt < 0) throw ValidationError(where + ": negative count");
            if (cnt > pop) throw ValidationError(where + ": count exceeds population");
            break;
          case 1:
            if (cnt < 0) throw ValidationError(where + ": negative adult count");
            if (cnt + 1 > pop) {
              throw ValidationError(where + ": censored interval empty given population");
            }
            break;
          case 2:
            if (pop < 2) {
              throw ValidationError(where + ": censored interval empty given population");
            }
            break;
          default:
            throw ValidationError(where + ": unknown censor code " + std::to_string(c));
        }
      }
    }
    for (const DesignColumn& col : y.design.cols) {
      if (col.acs_index >= 0) {
        throw ValidationError("latent covariate '" + col.name +
                              "' may only enter the risk design");
      }
      if (static_cast<int>(col.active.size()) != T) {
        throw ValidationError("design column '" + col.name + "' activity mask has wrong length");
      }
    }
  }
  for (const DesignColumn& col : risk_design.cols) {
    if (static_cast<int>(col.active.size()) != T) {
      throw ValidationError("design column '" + col.name + "' activity mask has wrong length");
    }
    if (col.acs_index >= static_cast<int>(acs.size())) {
      throw ValidationError("design column '" + col.name + "' references a missing latent variable");
    }
  }
  for (const AcsVariableData& av : acs) {
    if (av.t_max != T) {
      throw ValidationError("latent variable '" + av.name + "' must extend to the final panel year");
    }
    if (av.t_min > 1) {
      throw ValidationError("latent variable '" + av.name + "' must cover the first panel year");
    }
    auto check_row = [&](const AcsRow& r, bool five) {
      std::string where = "latent variable '" + av.name + "' observation";
      if (r.i < 0 || r.i >= n) throw ValidationError(where + ": bad region index");
      if (!(r.se > 0.0)) throw ValidationError(where + ": standard error must be positive");
      if (!(r.value > 0.0 && r.value < 100.0)) {
        throw ValidationError(where + ": estimate must lie in (0,100)");
      }
      int lo = five ? r.t - 4 : r.t;
      if (lo < av.t_min || r.t > av.t_max) {
        throw ValidationError(where + ": window outside the latent year range");
      }
    };
    for (const AcsRow& r : av.one_year) check_row(r, false);
    for (const AcsRow& r : av.five_year) check_row(r, true);
  }
}

}  // namespace abund
