#include "abund/io.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace abund {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& context) {
  const char* begin = s.c_str();
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || errno == ERANGE) {
    throw ValidationError(context + ": '" + s + "' is not a number");
  }
  return v;
}

long long parse_int(const std::string& s, const std::string& context) {
  const char* begin = s.c_str();
  char* end = nullptr;
  errno = 0;
  long long v = std::strtoll(begin, &end, 10);
  if (end == begin || *end != '\0' || errno == ERANGE) {
    throw ValidationError(context + ": '" + s + "' is not an integer");
  }
  return v;
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  for (;;) {
    size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

}  // namespace

int CsvTable::col(const std::string& name) const {
  for (size_t c = 0; c < header.size(); ++c) {
    if (header[c] == name) return static_cast<int>(c);
  }
  return -1;
}

int CsvTable::need(const std::string& name) const {
  int c = col(name);
  if (c < 0) throw ValidationError(source + ": missing column '" + name + "'");
  return c;
}

std::string CsvTable::where(size_t row) const {
  return source + ":" + std::to_string(row + 2);  // header is line 1
}

CsvTable read_csv(std::istream& in, const std::string& source_name) {
  CsvTable t;
  t.source = source_name;
  std::string line;
  if (!std::getline(in, line)) {
    throw ValidationError(source_name + ": empty file");
  }
  t.header = split_commas(line);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split_commas(line);
    if (cells.size() != t.header.size()) {
      throw ValidationError(t.source + ":" + std::to_string(t.rows.size() + 2) +
                            ": expected " + std::to_string(t.header.size()) +
                            " fields, found " + std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return read_csv(in, path);
}

void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  auto emit = [&](const std::vector<std::string>& cells) {
    for (size_t c = 0; c < cells.size(); ++c) {
      if (cells[c].find(',') != std::string::npos) {
        throw std::runtime_error("CSV value '" + cells[c] + "' contains a comma");
      }
      if (c) out << ',';
      out << cells[c];
    }
    out << '\n';
  };
  emit(header);
  for (const auto& r : rows) emit(r);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

KvConfig read_kv_config(std::istream& in, const std::string& source_name) {
  KvConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string body = trim(line);
    if (body.empty()) continue;
    auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(source_name + ":" + std::to_string(line_no) +
                            ": expected key = value");
    }
    std::string key = trim(body.substr(0, eq));
    if (key.empty()) {
      throw ValidationError(source_name + ":" + std::to_string(line_no) +
                            ": empty key");
    }
    cfg[key] = trim(body.substr(eq + 1));
  }
  return cfg;
}

KvConfig read_kv_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return read_kv_config(in, path);
}

void write_kv_config_file(const std::string& path, const KvConfig& cfg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (const auto& [k, v] : cfg) out << k << " = " << v << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

uint64_t fnv1a64(const void* data, size_t len) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = 14695981039346656037ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string bytes = buf.str();
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return hex;
}

namespace {

int region_of(const AdjacencyGraph& g,
              const std::unordered_map<std::string, int>& index,
              const std::string& label, const std::string& where) {
  auto it = index.find(label);
  if (it == index.end()) {
    throw ValidationError(where + ": unknown region '" + label + "'");
  }
  (void)g;
  return it->second;
}

}  // namespace

Dataset load_dataset(const DatasetPaths& paths, const CovariateAssignment& assign) {
  Dataset ds;
  ds.graph = load_adjacency_file(paths.adjacency);
  for (const std::string& label : ds.graph.region_labels) {
    if (label.find(',') != std::string::npos) {
      throw ValidationError("region label '" + label + "' contains a comma");
    }
  }
  int n = ds.graph.n_regions;
  std::unordered_map<std::string, int> region_index;
  for (int i = 0; i < n; ++i) region_index[ds.graph.region_labels[i]] = i;

  // Counts define the year range and the outcome order.
  CsvTable counts = read_csv_file(paths.counts);
  int c_region = counts.need("region_id");
  int c_year = counts.need("year");
  int c_outcome = counts.need("outcome_id");
  int c_count = counts.need("count");
  int c_censor = counts.need("censor_code");
  int c_adult = counts.need("adult_count");
  if (counts.rows.empty()) throw ValidationError(counts.source + ": no data rows");
  int year_lo = 0, year_hi = 0;
  for (size_t r = 0; r < counts.rows.size(); ++r) {
    int y = static_cast<int>(parse_int(counts.at(r, c_year), counts.where(r)));
    if (r == 0) {
      year_lo = year_hi = y;
    } else {
      year_lo = std::min(year_lo, y);
      year_hi = std::max(year_hi, y);
    }
  }
  ds.base_year = year_lo;
  int T = year_hi - year_lo + 1;

  SurveillancePanel& panel = ds.panel;
  panel.n = n;
  panel.T = T;
  panel.region_labels = ds.graph.region_labels;
  std::vector<std::string> outcome_ids;
  std::map<std::string, int> outcome_index;
  struct Seen {
    std::vector<char> cell;
  };
  std::vector<Seen> seen;
  for (size_t r = 0; r < counts.rows.size(); ++r) {
    std::string where = counts.where(r);
    int i = region_of(ds.graph, region_index, counts.at(r, c_region), where);
    int year = static_cast<int>(parse_int(counts.at(r, c_year), where));
    int t = year - ds.base_year;
    const std::string& oid = counts.at(r, c_outcome);
    if (oid.empty()) throw ValidationError(where + ": empty outcome_id");
    auto it = outcome_index.find(oid);
    int k;
    if (it == outcome_index.end()) {
      k = static_cast<int>(outcome_ids.size());
      outcome_index.emplace(oid, k);
      outcome_ids.push_back(oid);
      panel.outcomes.emplace_back();
      OutcomeData& od = panel.outcomes.back();
      od.name = oid;
      od.counts = IntField(n, T, 0);
      od.censor.assign(static_cast<size_t>(n) * T, 0);
      seen.emplace_back();
      seen.back().cell.assign(static_cast<size_t>(n) * T, 0);
    } else {
      k = it->second;
    }
    OutcomeData& od = panel.outcomes[k];
    size_t cell = static_cast<size_t>(t) * n + i;
    if (seen[k].cell[cell]) {
      throw ValidationError(where + ": duplicate cell for region '" +
                            counts.at(r, c_region) + "', year " +
                            std::to_string(year) + ", outcome '" + oid + "'");
    }
    seen[k].cell[cell] = 1;
    const std::string& count_s = counts.at(r, c_count);
    const std::string& censor_s = counts.at(r, c_censor);
    const std::string& adult_s = counts.at(r, c_adult);
    long long censor = censor_s.empty() ? 0 : parse_int(censor_s, where);
    if (censor < 0 || censor > 2) {
      throw ValidationError(where + ": censor_code must be 0, 1, or 2");
    }
    if (censor == 0) {
      if (count_s.empty()) throw ValidationError(where + ": count required when censor_code is 0");
      if (!adult_s.empty()) throw ValidationError(where + ": adult_count must be blank when censor_code is 0");
      long long v = parse_int(count_s, where);
      if (v < 0) throw ValidationError(where + ": count must be nonnegative");
      od.counts(i, t) = v;
    } else if (censor == 1) {
      if (!count_s.empty()) throw ValidationError(where + ": count must be blank when censor_code is 1");
      if (adult_s.empty()) throw ValidationError(where + ": adult_count required when censor_code is 1");
      long long v = parse_int(adult_s, where);
      if (v < 0) throw ValidationError(where + ": adult_count must be nonnegative");
      od.counts(i, t) = v;
      od.censor[cell] = 1;
    } else {
      if (!count_s.empty() || !adult_s.empty()) {
        throw ValidationError(where + ": counts must be blank when censor_code is 2");
      }
      od.censor[cell] = 2;
    }
  }
  for (size_t k = 0; k < panel.outcomes.size(); ++k) {
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < n; ++i) {
        if (!seen[k].cell[static_cast<size_t>(t) * n + i]) {
          throw ValidationError(counts.source + ": missing cell for region '" +
                                panel.region_labels[i] + "', year " +
                                std::to_string(ds.base_year + t) + ", outcome '" +
                                outcome_ids[k] + "'");
        }
      }
    }
    OutcomeData& od = panel.outcomes[k];
    bool any = std::any_of(od.censor.begin(), od.censor.end(),
                           [](int8_t c) { return c != 0; });
    od.censorable = any;
    if (!any) od.censor.clear();
  }

  // Populations, one row per region-year.
  CsvTable pop = read_csv_file(paths.population);
  int p_region = pop.need("region_id");
  int p_year = pop.need("year");
  int p_value = pop.need("population");
  panel.population = IntField(n, T, 0);
  std::vector<char> pop_seen(static_cast<size_t>(n) * T, 0);
  for (size_t r = 0; r < pop.rows.size(); ++r) {
    std::string where = pop.where(r);
    int i = region_of(ds.graph, region_index, pop.at(r, p_region), where);
    int year = static_cast<int>(parse_int(pop.at(r, p_year), where));
    int t = year - ds.base_year;
    if (t < 0 || t >= T) continue;  // years outside the count panel are ignored
    size_t cell = static_cast<size_t>(t) * n + i;
    if (pop_seen[cell]) {
      throw ValidationError(where + ": duplicate population for region '" +
                            pop.at(r, p_region) + "', year " + std::to_string(year));
    }
    pop_seen[cell] = 1;
    long long v = parse_int(pop.at(r, p_value), where);
    if (v <= 0) throw ValidationError(where + ": population must be positive");
    panel.population(i, t) = v;
  }
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < n; ++i) {
      if (!pop_seen[static_cast<size_t>(t) * n + i]) {
        throw ValidationError(pop.source + ": missing population for region '" +
                              panel.region_labels[i] + "', year " +
                              std::to_string(ds.base_year + t));
      }
    }
  }

  // Covariates: plain rows (blank se) become design values; rows with a
  // standard error are observations of a latent variable.
  struct KnownVar {
    Field values;
    std::vector<char> year_has;  // any row for year t
    std::vector<char> full;      // all regions present for year t
  };
  std::map<std::string, KnownVar> known;
  std::map<std::string, AcsVariableData> latent;
  std::map<std::string, std::vector<double>> latent_values;
  for (const std::string& path : paths.covariates) {
    CsvTable cov = read_csv_file(path);
    int v_region = cov.need("region_id");
    int v_year = cov.need("year");
    int v_name = cov.need("variable");
    int v_value = cov.need("value");
    int v_se = cov.need("se");
    int v_window = cov.need("window");
    for (size_t r = 0; r < cov.rows.size(); ++r) {
      std::string where = cov.where(r);
      int i = region_of(ds.graph, region_index, cov.at(r, v_region), where);
      int year = static_cast<int>(parse_int(cov.at(r, v_year), where));
      int t = year - ds.base_year;
      const std::string& name = cov.at(r, v_name);
      if (name.empty()) throw ValidationError(where + ": empty variable name");
      double value = parse_double(cov.at(r, v_value), where);
      const std::string& se_s = cov.at(r, v_se);
      const std::string& win_s = cov.at(r, v_window);
      if (se_s.empty()) {
        long long window = win_s.empty() ? 1 : parse_int(win_s, where);
        if (window != 1) {
          throw ValidationError(where + ": multi-year windows need a standard error");
        }
        if (t < 0 || t >= T) {
          throw ValidationError(where + ": year outside the count panel");
        }
        auto [it, fresh] = known.try_emplace(name);
        if (fresh) {
          it->second.values = Field(n, T, 0.0);
          it->second.year_has.assign(T, 0);
          it->second.full.assign(static_cast<size_t>(n) * T, 0);
        }
        if (it->second.full[static_cast<size_t>(t) * n + i]) {
          throw ValidationError(where + ": duplicate value for variable '" + name + "'");
        }
        it->second.full[static_cast<size_t>(t) * n + i] = 1;
        it->second.year_has[t] = 1;
        it->second.values(i, t) = value;
      } else {
        double se = parse_double(se_s, where);
        if (!(se > 0.0)) throw ValidationError(where + ": standard error must be positive");
        long long window = win_s.empty() ? 1 : parse_int(win_s, where);
        if (window != 1 && window != 5) {
          throw ValidationError(where + ": window must be 1 or 5");
        }
        auto [it, fresh] = latent.try_emplace(name);
        if (fresh) {
          it->second.name = name;
          it->second.t_min = 1;
          it->second.t_max = T;
        }
        AcsRow row;
        row.i = i;
        row.t = t + 1;  // model years are one-based
        row.value = value;
        row.se = se;
        if (window == 1) {
          it->second.one_year.push_back(row);
        } else {
          it->second.five_year.push_back(row);
          it->second.t_min = std::min(it->second.t_min, row.t - 4);
        }
        latent_values[name].push_back(value);
      }
    }
  }
  for (auto& [name, av] : latent) {
    // Windows may end past the panel when an estimate was published later;
    // reject those rather than extend the latent years silently.
    for (const AcsRow& r : av.one_year) {
      if (r.t < 1 || r.t > T) {
        throw ValidationError("latent variable '" + name +
                              "' has a one-year row outside the panel years");
      }
    }
    for (const AcsRow& r : av.five_year) {
      if (r.t > T) {
        throw ValidationError("latent variable '" + name +
                              "' has a window ending past the panel years");
      }
    }
  }

  auto make_known_column = [&](const std::string& name) {
    auto it = known.find(name);
    if (it == known.end()) {
      throw ValidationError("covariate '" + name +
                            "' is assigned to a design but has no data rows");
    }
    const KnownVar& kv = it->second;
    DesignColumn col;
    col.name = name;
    col.values = kv.values;
    col.active.assign(T, 0);
    for (int t = 0; t < T; ++t) {
      if (!kv.year_has[t]) continue;
      for (int i = 0; i < n; ++i) {
        if (!kv.full[static_cast<size_t>(t) * n + i]) {
          throw ValidationError("covariate '" + name + "' is missing region '" +
                                panel.region_labels[i] + "' in year " +
                                std::to_string(ds.base_year + t));
        }
      }
      col.active[t] = 1;
    }
    standardize_column(col);
    return col;
  };
  for (const std::string& name : assign.risk) {
    if (auto it = latent.find(name); it != latent.end()) {
      DesignColumn col;
      col.name = name;
      col.values = Field(n, T, 0.0);
      col.active.assign(T, 1);
      col.acs_index = static_cast<int>(panel.acs.size());
      const std::vector<double>& vals = latent_values[name];
      if (vals.size() < 2) {
        throw ValidationError("latent variable '" + name +
                              "' needs at least two observations");
      }
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      double ss = 0.0;
      for (double v : vals) ss += (v - mean) * (v - mean);
      double sd = std::sqrt(ss / static_cast<double>(vals.size() - 1));
      if (!(sd > 0.0)) {
        throw ValidationError("latent variable '" + name + "' observations are constant");
      }
      col.center = mean;
      col.scale = sd;
      panel.acs.push_back(it->second);
      panel.risk_design.cols.push_back(std::move(col));
    } else {
      panel.risk_design.cols.push_back(make_known_column(name));
    }
  }
  for (const auto& [oid, names] : assign.detection) {
    auto it = outcome_index.find(oid);
    if (it == outcome_index.end()) {
      throw ValidationError("detection covariates name unknown outcome '" + oid + "'");
    }
    for (const std::string& name : names) {
      if (latent.count(name)) {
        throw ValidationError("latent covariate '" + name +
                              "' may only enter the risk design");
      }
      panel.outcomes[it->second].design.cols.push_back(make_known_column(name));
    }
  }
  std::set<std::string> assigned(assign.risk.begin(), assign.risk.end());
  for (const auto& [oid, names] : assign.detection) {
    assigned.insert(names.begin(), names.end());
  }
  for (const auto& [name, kv] : known) {
    if (!assigned.count(name)) {
      throw ValidationError("covariate '" + name + "' is not assigned to any design");
    }
  }
  for (const auto& [name, av] : latent) {
    if (!assigned.count(name)) {
      throw ValidationError("covariate '" + name + "' is not assigned to any design");
    }
  }

  // Survey estimates, spans in calendar years.
  CsvTable sv = read_csv_file(paths.survey);
  int s_a = sv.need("year_start");
  int s_b = sv.need("year_end");
  int s_est = sv.need("estimate");
  int s_se = sv.need("se");
  for (size_t r = 0; r < sv.rows.size(); ++r) {
    std::string where = sv.where(r);
    SurveyRow row;
    row.a = static_cast<int>(parse_int(sv.at(r, s_a), where)) - ds.base_year + 1;
    row.b = static_cast<int>(parse_int(sv.at(r, s_b), where)) - ds.base_year + 1;
    row.estimate = parse_double(sv.at(r, s_est), where);
    row.se = parse_double(sv.at(r, s_se), where);
    if (row.b > T) {
      throw ValidationError(where + ": survey span ends past the count panel");
    }
    ds.survey.rows.push_back(row);
  }

  panel.validate(ds.graph);
  ds.survey.validate();
  return ds;
}

void write_draws(const std::string& dir, const std::vector<ChainOutput>& chains) {
  for (const ChainOutput& ch : chains) {
    std::string path =
        (fs::path(dir) / ("draws_chain" + std::to_string(ch.chain_index + 1) + ".csv"))
            .string();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    for (size_t c = 0; c < ch.columns.size(); ++c) {
      if (c) out << ',';
      out << ch.columns[c];
    }
    out << '\n';
    for (long long r = 0; r < ch.n_kept; ++r) {
      for (size_t c = 0; c < ch.columns.size(); ++c) {
        if (c) out << ',';
        out << format_double(ch.value(r, c));
      }
      out << '\n';
    }
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
  }
}

std::vector<ChainOutput> read_draws(const std::string& dir) {
  std::vector<std::string> files;
  if (!fs::is_directory(dir)) {
    throw ValidationError("'" + dir + "' is not a directory");
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string name = entry.path().filename().string();
    if (name.rfind("draws_chain", 0) == 0 && name.size() > 15 &&
        name.substr(name.size() - 4) == ".csv") {
      files.push_back(entry.path().string());
    }
  }
  if (files.empty()) {
    throw ValidationError("no draws_chain*.csv files in '" + dir + "'");
  }
  std::sort(files.begin(), files.end());
  std::vector<ChainOutput> chains;
  for (size_t f = 0; f < files.size(); ++f) {
    CsvTable t = read_csv_file(files[f]);
    ChainOutput ch;
    ch.chain_index = static_cast<int>(f);
    ch.columns = t.header;
    ch.n_kept = static_cast<long long>(t.rows.size());
    ch.draws.reserve(t.rows.size() * t.header.size());
    for (size_t r = 0; r < t.rows.size(); ++r) {
      for (size_t c = 0; c < t.header.size(); ++c) {
        ch.draws.push_back(parse_double(t.rows[r][c], t.where(r)));
      }
    }
    if (!chains.empty() && chains.front().columns != ch.columns) {
      throw ValidationError("'" + files[f] + "' columns differ from '" + files[0] + "'");
    }
    chains.push_back(std::move(ch));
  }
  return chains;
}

void write_diagnostics(const std::string& path, const std::vector<ChainOutput>& chains) {
  std::vector<std::vector<std::string>> rows;
  std::vector<double> rhat = split_rhat(chains);
  if (!chains.empty()) {
    for (size_t c = 0; c < chains[0].columns.size(); ++c) {
      rows.push_back({chains[0].columns[c], "split_rhat", format_double(rhat[c])});
    }
  }
  for (const ChainOutput& ch : chains) {
    std::string suffix = "_chain" + std::to_string(ch.chain_index + 1);
    for (const AcceptanceStat& st : ch.acceptance) {
      rows.push_back({st.group, "acceptance_rate" + suffix, format_double(st.rate)});
    }
    rows.push_back({"count_update", "mean_slice_evals" + suffix,
                    format_double(ch.mean_slice_evals)});
    rows.push_back({"log_posterior", "final_tracked" + suffix,
                    format_double(ch.final_log_posterior_tracked)});
    rows.push_back({"log_posterior", "final_recomputed" + suffix,
                    format_double(ch.final_log_posterior_recomputed)});
  }
  write_csv_file(path, {"quantity", "statistic", "value"}, rows);
}

void write_summaries(const std::string& path,
                     const std::vector<PosteriorSummary>& summaries) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(summaries.size());
  for (const PosteriorSummary& s : summaries) {
    rows.push_back({s.name, format_double(s.mean), format_double(s.sd),
                    format_double(s.lower), format_double(s.upper),
                    std::to_string(s.n_draws)});
  }
  write_csv_file(path, {"quantity", "mean", "sd", "lower", "upper", "n_draws"}, rows);
}

std::vector<PosteriorSummary> read_summaries(const std::string& path) {
  CsvTable t = read_csv_file(path);
  int c_q = t.need("quantity");
  int c_mean = t.need("mean");
  int c_sd = t.need("sd");
  int c_lo = t.need("lower");
  int c_hi = t.need("upper");
  int c_n = t.need("n_draws");
  std::vector<PosteriorSummary> out;
  out.reserve(t.rows.size());
  for (size_t r = 0; r < t.rows.size(); ++r) {
    PosteriorSummary s;
    s.name = t.at(r, c_q);
    s.mean = parse_double(t.at(r, c_mean), t.where(r));
    s.sd = parse_double(t.at(r, c_sd), t.where(r));
    s.lower = parse_double(t.at(r, c_lo), t.where(r));
    s.upper = parse_double(t.at(r, c_hi), t.where(r));
    s.n_draws = parse_int(t.at(r, c_n), t.where(r));
    out.push_back(std::move(s));
  }
  return out;
}

void write_manifest(const std::string& dir, const RunManifest& m) {
  nlohmann::json j;
  j["command"] = m.command;
  j["version"] = m.version;
  j["seed"] = m.seed;
  j["inputs"] = m.inputs;
  j["config"] = m.config;
  j["extras"] = m.extras;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  std::string path = (fs::path(dir) / "manifest.json").string();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::string iso8601_utc_now() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace abund
