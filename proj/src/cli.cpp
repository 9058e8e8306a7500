#include "abund/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "abund/io.hpp"
#include "abund/simulate.hpp"

namespace abund {

namespace fs = std::filesystem;

namespace {

std::string trim_copy(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  size_t start = 0;
  for (;;) {
    size_t pos = s.find(',', start);
    std::string item = trim_copy(pos == std::string::npos ? s.substr(start)
                                                          : s.substr(start, pos - start));
    if (!item.empty()) out.push_back(item);
    if (pos == std::string::npos) return out;
    start = pos + 1;
  }
}

std::string cfg_str(const KvConfig& cfg, const std::string& key,
                    const std::string& fallback) {
  auto it = cfg.find(key);
  return it == cfg.end() ? fallback : it->second;
}

long long cfg_int(const KvConfig& cfg, const std::string& key, long long fallback) {
  auto it = cfg.find(key);
  return it == cfg.end() ? fallback : parse_int(it->second, "config key '" + key + "'");
}

double cfg_double(const KvConfig& cfg, const std::string& key, double fallback) {
  auto it = cfg.find(key);
  return it == cfg.end() ? fallback
                         : parse_double(it->second, "config key '" + key + "'");
}

bool cfg_bool(const KvConfig& cfg, const std::string& key, bool fallback) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ValidationError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<double> cfg_doubles(const KvConfig& cfg, const std::string& key,
                                std::vector<double> fallback) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  std::vector<double> out;
  for (const std::string& item : split_list(it->second)) {
    out.push_back(parse_double(item, "config key '" + key + "'"));
  }
  return out;
}

std::vector<int> cfg_ints(const KvConfig& cfg, const std::string& key,
                          std::vector<int> fallback) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  std::vector<int> out;
  for (const std::string& item : split_list(it->second)) {
    out.push_back(static_cast<int>(parse_int(item, "config key '" + key + "'")));
  }
  return out;
}

// Relative paths in a config file resolve against the file's directory.
std::string resolve_path(const std::string& path, const std::string& config_path) {
  if (path.empty() || config_path.empty()) return path;
  fs::path p(path);
  if (p.is_absolute()) return path;
  return (fs::path(config_path).parent_path() / p).string();
}

KvConfig load_config(const CliOptions& opt) {
  if (opt.config_path.empty()) return {};
  return read_kv_config_file(opt.config_path);
}

SamplerConfig sampler_from(const KvConfig& cfg, const CliOptions& opt) {
  SamplerConfig sc;
  sc.n_iterations = cfg_int(cfg, "iters", sc.n_iterations);
  sc.n_burnin = cfg_int(cfg, "burnin", sc.n_burnin);
  sc.thin = static_cast<int>(cfg_int(cfg, "thin", sc.thin));
  sc.n_chains = static_cast<int>(cfg_int(cfg, "chains", sc.n_chains));
  sc.rng_seed = static_cast<uint64_t>(cfg_int(cfg, "seed", 1));
  sc.monitor_cells = cfg_bool(cfg, "monitor_cells", sc.monitor_cells);
  sc.adapt.interval = static_cast<int>(cfg_int(cfg, "adapt_interval", sc.adapt.interval));
  sc.slice.max_stepout =
      static_cast<int>(cfg_int(cfg, "max_stepout", sc.slice.max_stepout));
  sc.slice.width_scale = cfg_double(cfg, "width_scale", sc.slice.width_scale);
  if (opt.has_iters) sc.n_iterations = opt.iters;
  if (opt.has_burnin) sc.n_burnin = opt.burnin;
  if (opt.has_thin) sc.thin = opt.thin;
  if (opt.has_chains) sc.n_chains = opt.chains;
  if (opt.has_seed) sc.rng_seed = opt.seed;
  sc.validate();
  return sc;
}

ScenarioConfig scenario_from(const KvConfig& cfg) {
  ScenarioConfig sc;
  sc.grid_rows = static_cast<int>(cfg_int(cfg, "grid_rows", sc.grid_rows));
  sc.grid_cols = static_cast<int>(cfg_int(cfg, "grid_cols", sc.grid_cols));
  sc.T = static_cast<int>(cfg_int(cfg, "years", sc.T));
  sc.n_replicates = static_cast<int>(cfg_int(cfg, "replicates", sc.n_replicates));
  sc.survey_years = cfg_ints(cfg, "survey_years", sc.survey_years);
  sc.pop_min = cfg_int(cfg, "pop_min", sc.pop_min);
  sc.pop_max = cfg_int(cfg, "pop_max", sc.pop_max);
  sc.survey_se = cfg_double(cfg, "survey_se", sc.survey_se);
  sc.beta0_mu = cfg_double(cfg, "beta0_mu", sc.beta0_mu);
  sc.beta1_mu = cfg_double(cfg, "beta1_mu", sc.beta1_mu);
  sc.gamma = cfg_doubles(cfg, "gamma", sc.gamma);
  sc.mu_det_base = cfg_doubles(cfg, "mu_det_base", sc.mu_det_base);
  sc.mu_det_trend = cfg_doubles(cfg, "mu_det_trend", sc.mu_det_trend);
  sc.tau2_f = cfg_doubles(cfg, "tau2_f", sc.tau2_f);
  sc.phi_f = cfg_doubles(cfg, "phi_f", sc.phi_f);
  sc.sigma2_eps = cfg_doubles(cfg, "sigma2_eps", sc.sigma2_eps);
  sc.tau2_u = cfg_double(cfg, "tau2_u", sc.tau2_u);
  sc.phi_u = cfg_double(cfg, "phi_u", sc.phi_u);
  sc.sigma2_v = cfg_double(cfg, "sigma2_v", sc.sigma2_v);
  if (cfg.count("mu_det_base") && !cfg.count("beta_det1")) {
    sc.beta_det.assign(sc.mu_det_base.size(), {});
  }
  for (size_t k = 0; k < sc.mu_det_base.size(); ++k) {
    std::string key = "beta_det" + std::to_string(k + 1);
    if (k < sc.beta_det.size()) {
      sc.beta_det[k] = cfg_doubles(cfg, key, sc.beta_det[k]);
    } else {
      sc.beta_det.push_back(cfg_doubles(cfg, key, {}));
    }
  }
  sc.beta_det.resize(sc.mu_det_base.size());
  sc.validate();
  return sc;
}

KvConfig effective_config(KvConfig cfg, const CliOptions& opt) {
  if (opt.has_seed) cfg["seed"] = std::to_string(opt.seed);
  if (opt.has_chains) cfg["chains"] = std::to_string(opt.chains);
  if (opt.has_iters) cfg["iters"] = std::to_string(opt.iters);
  if (opt.has_burnin) cfg["burnin"] = std::to_string(opt.burnin);
  if (opt.has_thin) cfg["thin"] = std::to_string(opt.thin);
  return cfg;
}

void add_input(RunManifest& m, const std::string& path) {
  if (!path.empty()) m.inputs[path] = file_digest(path);
}

void note(const CliOptions& opt, const std::string& msg) {
  if (!opt.quiet) std::cout << msg << "\n";
}

std::string year_str(int base_year, int t /* 0-based */) {
  return std::to_string(base_year + t);
}

// Dataset files in the ingestion schema, written into dir.
void write_dataset_files(const std::string& dir, const Dataset& ds) {
  const SurveillancePanel& panel = ds.panel;
  {
    std::string path = (fs::path(dir) / "adjacency.txt").string();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    for (auto [i, j] : ds.graph.edges) {
      out << ds.graph.region_labels[i] << ' ' << ds.graph.region_labels[j] << '\n';
    }
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (int k = 0; k < panel.K(); ++k) {
      const OutcomeData& od = panel.outcomes[k];
      for (int t = 0; t < panel.T; ++t) {
        for (int i = 0; i < panel.n; ++i) {
          int c = od.censor_at(i, t);
          std::string count, adult;
          if (c == 0) {
            count = std::to_string(od.counts(i, t));
          } else if (c == 1) {
            adult = std::to_string(od.counts(i, t));
          }
          rows.push_back({panel.region_labels[i], year_str(ds.base_year, t), od.name,
                          count, std::to_string(c), adult});
        }
      }
    }
    write_csv_file((fs::path(dir) / "counts.csv").string(),
                   {"region_id", "year", "outcome_id", "count", "censor_code",
                    "adult_count"},
                   rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (int t = 0; t < panel.T; ++t) {
      for (int i = 0; i < panel.n; ++i) {
        rows.push_back({panel.region_labels[i], year_str(ds.base_year, t),
                        std::to_string(panel.population(i, t))});
      }
    }
    write_csv_file((fs::path(dir) / "population.csv").string(),
                   {"region_id", "year", "population"}, rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    auto known_rows = [&](const DesignColumn& col) {
      for (int t = 0; t < panel.T; ++t) {
        if (!col.active[t]) continue;
        for (int i = 0; i < panel.n; ++i) {
          rows.push_back({panel.region_labels[i], year_str(ds.base_year, t), col.name,
                          format_double(col.values(i, t)), "", "1"});
        }
      }
    };
    for (const DesignColumn& col : panel.risk_design.cols) {
      if (col.acs_index < 0) known_rows(col);
    }
    for (const OutcomeData& od : panel.outcomes) {
      for (const DesignColumn& col : od.design.cols) known_rows(col);
    }
    for (const AcsVariableData& av : panel.acs) {
      for (const AcsRow& r : av.one_year) {
        rows.push_back({panel.region_labels[r.i], year_str(ds.base_year, r.t - 1),
                        av.name, format_double(r.value), format_double(r.se), "1"});
      }
      for (const AcsRow& r : av.five_year) {
        rows.push_back({panel.region_labels[r.i], year_str(ds.base_year, r.t - 1),
                        av.name, format_double(r.value), format_double(r.se), "5"});
      }
    }
    write_csv_file((fs::path(dir) / "covariates.csv").string(),
                   {"region_id", "year", "variable", "value", "se", "window"}, rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (const SurveyRow& r : ds.survey.rows) {
      rows.push_back({year_str(ds.base_year, r.a - 1), year_str(ds.base_year, r.b - 1),
                      format_double(r.estimate), format_double(r.se)});
    }
    write_csv_file((fs::path(dir) / "survey.csv").string(),
                   {"year_start", "year_end", "estimate", "se"}, rows);
  }
}

}  // namespace

int cmd_fit(const CliOptions& opt) {
  std::string started = iso8601_utc_now();
  if (opt.config_path.empty()) {
    throw ValidationError("fit needs --config with the input file paths");
  }
  KvConfig cfg = load_config(opt);
  DatasetPaths paths;
  auto need_path = [&](const char* key) {
    std::string v = cfg_str(cfg, key, "");
    if (v.empty()) {
      throw ValidationError(std::string("config key '") + key + "' is required");
    }
    return resolve_path(v, opt.config_path);
  };
  paths.adjacency = need_path("adjacency");
  paths.counts = need_path("counts");
  paths.population = need_path("population");
  paths.survey = need_path("survey");
  for (const std::string& p : split_list(cfg_str(cfg, "covariates", ""))) {
    paths.covariates.push_back(resolve_path(p, opt.config_path));
  }
  CovariateAssignment assign;
  assign.risk = split_list(cfg_str(cfg, "risk_covariates", ""));
  const std::string det_prefix = "detection_covariates_";
  for (const auto& [key, value] : cfg) {
    if (key.rfind(det_prefix, 0) == 0) {
      assign.detection[key.substr(det_prefix.size())] = split_list(value);
    }
  }

  Dataset ds = load_dataset(paths, assign);
  note(opt, "panel: " + std::to_string(ds.panel.n) + " regions, " +
                std::to_string(ds.panel.T) + " years, " +
                std::to_string(ds.panel.K()) + " outcomes, " +
                std::to_string(ds.survey.rows.size()) + " survey rows");

  SamplerConfig sc = sampler_from(cfg, opt);
  sc.monitor_cells = true;  // the per-cell table below needs them
  std::vector<ChainOutput> chains = run_chains(ds.panel, ds.survey, ds.graph, sc);
  for (const ChainOutput& ch : chains) {
    note(opt, "chain " + std::to_string(ch.chain_index + 1) + ": kept " +
                  std::to_string(ch.n_kept) + " draws, final log posterior " +
                  format_double(ch.final_log_posterior_tracked));
  }
  std::vector<PosteriorSummary> summ = summarize(chains);

  fs::create_directories(opt.out_dir);
  write_draws(opt.out_dir, chains);
  write_diagnostics((fs::path(opt.out_dir) / "diagnostics.csv").string(), chains);
  write_summaries((fs::path(opt.out_dir) / "summaries.csv").string(), summ);

  std::unordered_map<std::string, const PosteriorSummary*> by_name;
  by_name.reserve(summ.size());
  for (const PosteriorSummary& s : summ) by_name[s.name] = &s;
  auto lookup = [&](const std::string& name) -> const PosteriorSummary& {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw std::runtime_error("monitored quantity '" + name + "' missing");
    }
    return *it->second;
  };
  TrendFit baseline = baseline_estimate(ds.survey);
  std::vector<std::string> header = {"region_id", "year", "population"};
  for (const char* q : {"n", "prevalence", "lambda"}) {
    for (const char* st : {"mean", "sd", "lower", "upper"}) {
      header.push_back(std::string(q) + "_" + st);
    }
  }
  for (const OutcomeData& od : ds.panel.outcomes) {
    for (const char* st : {"mean", "sd", "lower", "upper"}) {
      header.push_back("p_" + od.name + "_" + st);
    }
  }
  header.push_back("baseline_prevalence");
  header.push_back("above_baseline");
  header.push_back("below_baseline");
  std::vector<std::vector<std::string>> rows;
  for (int t = 0; t < ds.panel.T; ++t) {
    double mu_t = statewide_mean(baseline.beta0, baseline.beta1, t + 1);
    for (int i = 0; i < ds.panel.n; ++i) {
      std::string cell =
          "[" + ds.panel.region_labels[i] + ":" + std::to_string(t + 1) + "]";
      const PosteriorSummary& sn = lookup("N" + cell);
      const PosteriorSummary& sl = lookup("lambda" + cell);
      double pop = static_cast<double>(ds.panel.population(i, t));
      std::vector<std::string> row = {ds.panel.region_labels[i],
                                      year_str(ds.base_year, t),
                                      std::to_string(ds.panel.population(i, t))};
      auto push4 = [&](double mean, double sd, double lo, double hi) {
        row.push_back(format_double(mean));
        row.push_back(format_double(sd));
        row.push_back(format_double(lo));
        row.push_back(format_double(hi));
      };
      push4(sn.mean, sn.sd, sn.lower, sn.upper);
      push4(sn.mean / pop, sn.sd / pop, sn.lower / pop, sn.upper / pop);
      push4(sl.mean, sl.sd, sl.lower, sl.upper);
      for (int k = 0; k < ds.panel.K(); ++k) {
        const PosteriorSummary& sp = lookup("p" + std::to_string(k + 1) + cell);
        push4(sp.mean, sp.sd, sp.lower, sp.upper);
      }
      row.push_back(format_double(mu_t));
      row.push_back(sn.lower / pop > mu_t ? "1" : "0");
      row.push_back(sn.upper / pop < mu_t ? "1" : "0");
      rows.push_back(std::move(row));
    }
  }
  write_csv_file((fs::path(opt.out_dir) / "cells.csv").string(), header, rows);

  RunManifest manifest;
  manifest.command = "fit";
  manifest.seed = sc.rng_seed;
  manifest.config = effective_config(cfg, opt);
  manifest.started_at = started;
  add_input(manifest, opt.config_path);
  add_input(manifest, paths.adjacency);
  add_input(manifest, paths.counts);
  add_input(manifest, paths.population);
  add_input(manifest, paths.survey);
  for (const std::string& p : paths.covariates) add_input(manifest, p);
  long long kept = 0;
  for (const ChainOutput& ch : chains) kept += ch.n_kept;
  manifest.extras["base_year"] = std::to_string(ds.base_year);
  manifest.extras["n_draws_kept"] = std::to_string(kept);
  manifest.extras["n_chains"] = std::to_string(sc.n_chains);
  manifest.finished_at = iso8601_utc_now();
  write_manifest(opt.out_dir, manifest);
  note(opt, "wrote " + opt.out_dir);
  return 0;
}

int cmd_simulate(const CliOptions& opt) {
  std::string started = iso8601_utc_now();
  KvConfig cfg = load_config(opt);
  ScenarioConfig sc = scenario_from(cfg);
  uint64_t seed = opt.has_seed ? opt.seed : static_cast<uint64_t>(cfg_int(cfg, "seed", 1));
  SimTruth truth;
  SimData data = simulate_dataset(sc, seed, &truth);

  fs::create_directories(opt.out_dir);
  Dataset ds;
  ds.graph = data.graph;
  ds.panel = data.panel;
  ds.survey = data.survey;
  ds.base_year = 1;
  write_dataset_files(opt.out_dir, ds);

  {
    std::vector<std::vector<std::string>> rows;
    for (int t = 0; t < sc.T; ++t) {
      for (int i = 0; i < data.panel.n; ++i) {
        rows.push_back({data.panel.region_labels[i], year_str(1, t),
                        std::to_string(truth.N(i, t))});
      }
    }
    write_csv_file((fs::path(opt.out_dir) / "truth_n.csv").string(),
                   {"region_id", "year", "n"}, rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (int t = 0; t < sc.T; ++t) {
      for (int i = 0; i < data.panel.n; ++i) {
        rows.push_back({data.panel.region_labels[i], year_str(1, t),
                        format_double(truth.lambda(i, t))});
      }
    }
    write_csv_file((fs::path(opt.out_dir) / "truth_lambda.csv").string(),
                   {"region_id", "year", "lambda"}, rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (int k = 0; k < sc.K(); ++k) {
      for (int t = 0; t < sc.T; ++t) {
        for (int i = 0; i < data.panel.n; ++i) {
          rows.push_back({data.panel.region_labels[i], year_str(1, t),
                          data.panel.outcomes[k].name,
                          format_double(truth.p[k](i, t))});
        }
      }
    }
    write_csv_file((fs::path(opt.out_dir) / "truth_p.csv").string(),
                   {"region_id", "year", "outcome_id", "p"}, rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"beta0_mu", format_double(truth.beta0_mu)});
    rows.push_back({"beta1_mu", format_double(truth.beta1_mu)});
    for (int t = 0; t < sc.T; ++t) {
      rows.push_back({"mu[" + std::to_string(t + 1) + "]", format_double(truth.mu_t[t])});
    }
    for (int k = 0; k < sc.K(); ++k) {
      for (int t = 0; t < sc.T; ++t) {
        rows.push_back({"muDet" + std::to_string(k + 1) + "[" + std::to_string(t + 1) + "]",
                        format_double(truth.mu_det[k][t])});
      }
    }
    write_csv_file((fs::path(opt.out_dir) / "truth_params.csv").string(),
                   {"name", "value"}, rows);
  }
  {
    KvConfig fit_cfg;
    fit_cfg["adjacency"] = "adjacency.txt";
    fit_cfg["counts"] = "counts.csv";
    fit_cfg["population"] = "population.csv";
    fit_cfg["survey"] = "survey.csv";
    fit_cfg["covariates"] = "covariates.csv";
    std::string risk;
    for (const DesignColumn& col : data.panel.risk_design.cols) {
      if (!risk.empty()) risk += ",";
      risk += col.name;
    }
    fit_cfg["risk_covariates"] = risk;
    for (const OutcomeData& od : data.panel.outcomes) {
      std::string names;
      for (const DesignColumn& col : od.design.cols) {
        if (!names.empty()) names += ",";
        names += col.name;
      }
      if (!names.empty()) fit_cfg["detection_covariates_" + od.name] = names;
    }
    write_kv_config_file((fs::path(opt.out_dir) / "fit_config.txt").string(), fit_cfg);
  }

  RunManifest manifest;
  manifest.command = "simulate";
  manifest.seed = seed;
  manifest.config = effective_config(cfg, opt);
  manifest.started_at = started;
  add_input(manifest, opt.config_path);
  manifest.extras["n_regions"] = std::to_string(data.panel.n);
  manifest.extras["n_years"] = std::to_string(sc.T);
  manifest.extras["base_year"] = "1";
  manifest.finished_at = iso8601_utc_now();
  write_manifest(opt.out_dir, manifest);
  note(opt, "wrote " + opt.out_dir);
  return 0;
}

int cmd_evaluate(const CliOptions& opt) {
  std::string started = iso8601_utc_now();
  KvConfig cfg = load_config(opt);
  EvalOptions ev;
  ev.scenario = scenario_from(cfg);
  ev.fit = sampler_from(cfg, opt);
  ev.fit.monitor_cells = true;  // cell scoring needs the per-cell draws
  ev.seed = opt.has_seed ? opt.seed : static_cast<uint64_t>(cfg_int(cfg, "seed", 1));
  ev.threads = static_cast<int>(cfg_int(cfg, "threads", 0));
  ev.run_single = cfg_bool(cfg, "run_single", true);
  ev.single_outcome = static_cast<int>(cfg_int(cfg, "single_outcome", 2)) - 1;
  std::string label = "yearly";
  {
    auto years = ev.scenario.effective_survey_years();
    std::vector<int> all(ev.scenario.T);
    for (int t = 0; t < ev.scenario.T; ++t) all[t] = t + 1;
    if (years != all) label = "sparse";
  }
  note(opt, "running " + std::to_string(ev.scenario.n_replicates) + " replicates (" +
                label + " survey)");

  EvaluationReport report = run_evaluation(ev);

  fs::create_directories(opt.out_dir);
  const std::vector<std::pair<std::string, double ReplicateScore::*>> metrics = {
      {"coverage", &ReplicateScore::coverage},
      {"rmse_n", &ReplicateScore::rmse_n},
      {"rmse_lambda", &ReplicateScore::rmse_lambda},
      {"rel_mae_n", &ReplicateScore::rel_mae_n}};
  std::vector<std::pair<std::string, ReplicateScore ReplicateResult::*>> models = {
      {"proposed", &ReplicateResult::proposed},
      {"baseline", &ReplicateResult::baseline}};
  bool has_single =
      !report.replicates.empty() && report.replicates.front().has_single;
  if (has_single) models.push_back({"single", &ReplicateResult::single});

  {
    std::vector<std::vector<std::string>> rows;
    for (const ReplicateResult& r : report.replicates) {
      for (const auto& [mname, mptr] : models) {
        for (const auto& [qname, qptr] : metrics) {
          rows.push_back({std::to_string(r.replicate), mname, qname,
                          format_double((r.*mptr).*qptr)});
        }
      }
    }
    write_csv_file((fs::path(opt.out_dir) / "replicates.csv").string(),
                   {"replicate", "model", "metric", "value"}, rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& [mname, mptr] : models) {
      for (const auto& [qname, qptr] : metrics) {
        rows.push_back({label, mname, "mean_" + qname,
                        format_double(report.mean_metric(mptr, qptr))});
        rows.push_back({label, mname, "median_" + qname,
                        format_double(report.median_metric(mptr, qptr))});
      }
    }
    auto win_rows = [&](const std::string& vs, ReplicateScore ReplicateResult::*ch) {
      for (const auto& [qname, qptr] : metrics) {
        if (qname == "coverage") continue;
        rows.push_back({label, vs, "wins_" + qname,
                        std::to_string(report.wins(qptr, ch))});
      }
    };
    win_rows("proposed_vs_baseline", &ReplicateResult::baseline);
    if (has_single) win_rows("proposed_vs_single", &ReplicateResult::single);
    rows.push_back({label, "truth_coverage", "beta0_mu",
                    format_double(report.coverage_rate_beta0())});
    rows.push_back({label, "truth_coverage", "beta1_mu",
                    format_double(report.coverage_rate_beta1())});
    rows.push_back({label, "truth_coverage", "mu_det",
                    format_double(report.coverage_rate_mu_det())});
    write_csv_file((fs::path(opt.out_dir) / "aggregate.csv").string(),
                   {"scenario", "model", "metric", "value"}, rows);
  }

  RunManifest manifest;
  manifest.command = "evaluate";
  manifest.seed = ev.seed;
  manifest.config = effective_config(cfg, opt);
  manifest.started_at = started;
  add_input(manifest, opt.config_path);
  manifest.extras["scenario"] = label;
  manifest.extras["n_replicates"] = std::to_string(ev.scenario.n_replicates);
  manifest.finished_at = iso8601_utc_now();
  write_manifest(opt.out_dir, manifest);
  note(opt, "wrote " + opt.out_dir);
  return 0;
}

int cmd_summarize(const CliOptions& opt) {
  std::string started = iso8601_utc_now();
  if (fs::weakly_canonical(fs::path(opt.out_dir)) ==
      fs::weakly_canonical(fs::path(opt.run_dir))) {
    throw ValidationError("summarize output directory must differ from the run directory");
  }
  std::vector<ChainOutput> chains = read_draws(opt.run_dir);
  long long total = 0;
  for (const ChainOutput& ch : chains) total += ch.n_kept;
  if (opt.has_thin && opt.thin > 1) {
    for (ChainOutput& ch : chains) {
      std::vector<double> kept;
      long long n_kept = 0;
      for (long long r = 0; r < ch.n_kept; r += opt.thin) {
        for (size_t c = 0; c < ch.columns.size(); ++c) {
          kept.push_back(ch.value(r, c));
        }
        ++n_kept;
      }
      ch.draws = std::move(kept);
      ch.n_kept = n_kept;
    }
  }
  long long used = 0;
  for (const ChainOutput& ch : chains) used += ch.n_kept;

  int base_year = 1;
  {
    fs::path mpath = fs::path(opt.run_dir) / "manifest.json";
    if (fs::exists(mpath)) {
      std::ifstream in(mpath);
      nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
      if (!j.is_discarded() && j.contains("extras") &&
          j["extras"].contains("base_year")) {
        base_year = std::stoi(j["extras"]["base_year"].get<std::string>());
      }
    }
  }

  std::vector<PosteriorSummary> summ = summarize(chains);
  auto parse_cell = [](const std::string& name, std::string* q, std::string* region,
                       int* t) {
    if (name.empty() || name.back() != ']') return false;
    size_t lb = name.find('[');
    if (lb == std::string::npos || lb == 0) return false;
    std::string inside = name.substr(lb + 1, name.size() - lb - 2);
    size_t colon = inside.rfind(':');
    if (colon == std::string::npos) return false;
    std::string label = inside.substr(0, colon);
    std::string ts = inside.substr(colon + 1);
    if (label.empty() || ts.empty()) return false;
    for (char c : ts) {
      if (c < '0' || c > '9') return false;
    }
    *q = name.substr(0, lb);
    *region = label;
    *t = std::stoi(ts);
    return true;
  };
  std::vector<std::vector<std::string>> rows;
  rows.reserve(summ.size());
  for (const PosteriorSummary& s : summ) {
    std::string q, region;
    int t = 0;
    if (parse_cell(s.name, &q, &region, &t)) {
      rows.push_back({region, year_str(base_year, t - 1), q, format_double(s.mean),
                      format_double(s.lower), format_double(s.upper)});
    } else {
      rows.push_back({"", "", s.name, format_double(s.mean), format_double(s.lower),
                      format_double(s.upper)});
    }
  }
  fs::create_directories(opt.out_dir);
  write_csv_file((fs::path(opt.out_dir) / "summary_long.csv").string(),
                 {"region", "year", "quantity", "mean", "lower", "upper"}, rows);

  RunManifest manifest;
  manifest.command = "summarize";
  manifest.started_at = started;
  for (const ChainOutput& ch : chains) {
    std::string path = (fs::path(opt.run_dir) /
                        ("draws_chain" + std::to_string(ch.chain_index + 1) + ".csv"))
                           .string();
    if (fs::exists(path)) add_input(manifest, path);
  }
  manifest.extras["n_draws_total"] = std::to_string(total);
  manifest.extras["n_draws_used"] = std::to_string(used);
  manifest.extras["base_year"] = std::to_string(base_year);
  manifest.finished_at = iso8601_utc_now();
  write_manifest(opt.out_dir, manifest);
  note(opt, "wrote " + opt.out_dir);
  return 0;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"County-level hidden population abundance model"};
  app.require_subcommand(1);
  CliOptions opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "key=value configuration file");
    sub->add_option("--seed", opt.seed, "random seed (overrides the config)");
    sub->add_option("--chains", opt.chains, "number of chains");
    sub->add_option("--iters", opt.iters, "total iterations per chain");
    sub->add_option("--burnin", opt.burnin, "burn-in iterations per chain");
    sub->add_option("--thin", opt.thin, "thinning interval");
    sub->add_option("--out", opt.out_dir, "output directory");
    sub->add_flag("--quiet", opt.quiet, "suppress progress output");
  };
  CLI::App* fit = app.add_subcommand("fit", "fit the model to a surveillance panel");
  CLI::App* simulate = app.add_subcommand("simulate", "draw one synthetic data set");
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "run the replicated model comparison");
  CLI::App* summarize_cmd =
      app.add_subcommand("summarize", "recompute summaries from saved draws");
  for (CLI::App* sub : {fit, simulate, evaluate, summarize_cmd}) add_common(sub);
  summarize_cmd->add_option("run_dir", opt.run_dir, "directory holding draw files")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  CLI::App* sub = app.get_subcommands().front();
  opt.has_seed = sub->count("--seed") > 0;
  opt.has_chains = sub->count("--chains") > 0;
  opt.has_iters = sub->count("--iters") > 0;
  opt.has_burnin = sub->count("--burnin") > 0;
  opt.has_thin = sub->count("--thin") > 0;
  try {
    if (sub == fit) return cmd_fit(opt);
    if (sub == simulate) return cmd_simulate(opt);
    if (sub == evaluate) return cmd_evaluate(opt);
    return cmd_summarize(opt);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace abund
