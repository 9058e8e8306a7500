// File formats and the command surface: round-trip precision, row-level
// ingestion errors, dataset write/read equivalence, and the four commands
// end to end with their exit-code contract.
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "abund/cli.hpp"
#include "abund/io.hpp"
#include "abund/simulate.hpp"

using namespace abund;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("abund_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::trunc);
  out << content;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "abund");
  std::vector<char*> argv;
  for (std::string& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

// Two regions, 2007-2008, one censorable outcome, one known and one latent
// covariate, with per-file overrides for the error-path tests.
struct Fixture {
  std::map<std::string, std::string> files;

  Fixture() {
    files["adjacency.txt"] = "a b\n";
    files["counts.csv"] =
        "region_id,year,outcome_id,count,censor_code,adult_count\n"
        "a,2007,adm,3,0,\n"
        "b,2007,adm,,1,2\n"
        "a,2008,adm,,2,\n"
        "b,2008,adm,4,0,\n";
    files["population.csv"] =
        "region_id,year,population\n"
        "a,2007,500\nb,2007,600\na,2008,510\nb,2008,610\n";
    files["covariates.csv"] =
        "region_id,year,variable,value,se,window\n"
        "a,2007,w1,1.5,,1\n"
        "b,2007,w1,2.5,,1\n"
        "a,2008,w1,0.5,,1\n"
        "b,2008,w1,3.5,,1\n"
        "a,2007,pov,12.5,1.1,1\n"
        "b,2008,pov,19.0,0.9,1\n"
        "a,2008,pov,15.0,0.7,5\n";
    files["survey.csv"] =
        "year_start,year_end,estimate,se\n"
        "2007,2007,0.05,0.003\n"
        "2008,2008,0.06,0.004\n";
  }

  Dataset load(const fs::path& dir, CovariateAssignment assign = {}) const {
    for (const auto& [name, content] : files) write_text(dir / name, content);
    DatasetPaths paths;
    paths.adjacency = (dir / "adjacency.txt").string();
    paths.counts = (dir / "counts.csv").string();
    paths.population = (dir / "population.csv").string();
    paths.survey = (dir / "survey.csv").string();
    paths.covariates = {(dir / "covariates.csv").string()};
    if (assign.risk.empty() && assign.detection.empty()) {
      assign.risk = {"w1", "pov"};
      assign.detection["adm"] = {"w1"};
    }
    return load_dataset(paths, assign);
  }
};

}  // namespace

TEST_CASE("doubles survive the round trip through text") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -0.0, 17.0,
                   0.049999999999999996}) {
    CHECK(parse_double(format_double(v), "t") == v);
  }
  CHECK(format_double(17.0) == "17");
  CHECK_THROWS_AS(parse_double("", "t"), ValidationError);
  CHECK_THROWS_AS(parse_double("x12", "t"), ValidationError);
  CHECK_THROWS_AS(parse_double("1.2.3", "t"), ValidationError);
  CHECK(parse_int("-42", "t") == -42);
  CHECK_THROWS_AS(parse_int("1.5", "t"), ValidationError);
  CHECK_THROWS_AS(parse_int("", "t"), ValidationError);
  CHECK_THROWS_AS(parse_int("99999999999999999999999", "t"), ValidationError);
}

TEST_CASE("csv tables parse headers, rows, and report positions") {
  std::istringstream in("x,y\n1,2\n3,4\n");
  CsvTable t = read_csv(in, "mem.csv");
  CHECK(t.header == std::vector<std::string>{"x", "y"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.at(1, t.need("y")) == "4");
  CHECK(t.col("z") == -1);
  CHECK_THROWS_WITH_AS(t.need("z"), doctest::Contains("missing column"),
                       ValidationError);
  CHECK(t.where(0) == "mem.csv:2");
  std::istringstream ragged("x,y\n1\n");
  CHECK_THROWS_WITH_AS(read_csv(ragged, "r.csv"), doctest::Contains("r.csv:2"),
                       ValidationError);
  std::istringstream empty("");
  CHECK_THROWS_AS(read_csv(empty, "e.csv"), ValidationError);
}

TEST_CASE("csv writer refuses values containing separators") {
  fs::path dir = fresh_dir("csvsep");
  CHECK_THROWS_AS(
      write_csv_file((dir / "x.csv").string(), {"a"}, {{"1,2"}}),
      std::runtime_error);
}

TEST_CASE("key value configs parse comments and keep the last value") {
  std::istringstream in(
      "# run settings\n"
      "iters = 100\n"
      "\n"
      "iters=200   # override\n"
      "label = desk run\n");
  KvConfig cfg = read_kv_config(in, "c.txt");
  CHECK(cfg.at("iters") == "200");
  CHECK(cfg.at("label") == "desk run");
  std::istringstream bad("novalue\n");
  CHECK_THROWS_AS(read_kv_config(bad, "c.txt"), ValidationError);

  fs::path dir = fresh_dir("kv");
  write_kv_config_file((dir / "c.txt").string(), cfg);
  KvConfig back = read_kv_config_file((dir / "c.txt").string());
  CHECK(back == cfg);
}

TEST_CASE("digests use 64-bit fnv-1a") {
  CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
  fs::path dir = fresh_dir("digest");
  write_text(dir / "f.txt", "hello");
  std::string d1 = file_digest((dir / "f.txt").string());
  CHECK(d1.size() == 16);
  write_text(dir / "f.txt", "hello!");
  CHECK(file_digest((dir / "f.txt").string()) != d1);
  write_text(dir / "f.txt", "hello");
  CHECK(file_digest((dir / "f.txt").string()) == d1);
}

TEST_CASE("datasets load with censor codes, year mapping, and latent columns") {
  fs::path dir = fresh_dir("load_ok");
  Dataset ds = Fixture().load(dir);
  CHECK(ds.base_year == 2007);
  CHECK(ds.panel.n == 2);
  CHECK(ds.panel.T == 2);
  REQUIRE(ds.panel.K() == 1);
  const OutcomeData& y = ds.panel.outcomes[0];
  CHECK(y.name == "adm");
  CHECK(y.censorable);
  CHECK(y.censor_at(0, 0) == 0);
  CHECK(y.count_at(0, 0) == 3);
  CHECK(y.censor_at(1, 0) == 1);
  CHECK(y.count_at(1, 0) == 2);
  CHECK(y.censor_at(0, 1) == 2);
  CHECK(y.censor_at(1, 1) == 0);
  CHECK(y.count_at(1, 1) == 4);
  CHECK(ds.panel.population(1, 1) == 610);
  // Survey spans in model years.
  REQUIRE(ds.survey.rows.size() == 2);
  CHECK(ds.survey.rows[0].a == 1);
  CHECK(ds.survey.rows[1].b == 2);
  // Risk design: known column plus the latent one.
  REQUIRE(ds.panel.risk_design.cols.size() == 2);
  CHECK(ds.panel.risk_design.cols[0].acs_index == -1);
  CHECK(ds.panel.risk_design.cols[1].acs_index == 0);
  // Latent transform from the pooled observations {12.5, 19, 15}.
  CHECK(ds.panel.risk_design.cols[1].center == doctest::Approx(15.5));
  CHECK(ds.panel.risk_design.cols[1].scale ==
        doctest::Approx(std::sqrt(10.75)));
  REQUIRE(ds.panel.acs.size() == 1);
  CHECK(ds.panel.acs[0].t_min == -2);  // five-year window reaching back
  CHECK(ds.panel.acs[0].t_max == 2);
  CHECK(ds.panel.acs[0].one_year.size() == 2);
  CHECK(ds.panel.acs[0].five_year.size() == 1);
  // Detection design shares the known column.
  REQUIRE(y.design.cols.size() == 1);
  CHECK(y.design.cols[0].name == "w1");
}

TEST_CASE("ingestion errors name the file, line, and problem") {
  auto expect = [](Fixture fx, const std::string& needle, const char* tag) {
    fs::path dir = fresh_dir(std::string("load_err_") + tag);
    CHECK_THROWS_WITH_AS(fx.load(dir), doctest::Contains(needle.c_str()),
                         ValidationError);
  };
  Fixture fx;
  fx.files["counts.csv"] =
      "region_id,year,outcome_id,count,censor_code,adult_count\n"
      "zz,2007,adm,3,0,\n" + fx.files["counts.csv"].substr(
          fx.files["counts.csv"].find("b,2007"));
  expect(fx, "unknown region 'zz'", "region");

  fx = Fixture();
  fx.files["counts.csv"] =
      "region_id,year,outcome_id,count,censor_code,adult_count\n"
      "a,2007,adm,3,3,\n"
      "b,2007,adm,4,0,\n"
      "a,2008,adm,5,0,\n"
      "b,2008,adm,4,0,\n";
  expect(fx, "censor_code must be 0, 1, or 2", "badcode");

  fx = Fixture();
  fx.files["counts.csv"] =
      "region_id,year,outcome_id,count,censor_code,adult_count\n"
      "a,2007,adm,3,1,2\n"
      "b,2007,adm,4,0,\n"
      "a,2008,adm,5,0,\n"
      "b,2008,adm,4,0,\n";
  expect(fx, "count must be blank when censor_code is 1", "c1count");

  fx = Fixture();
  fx.files["counts.csv"] =
      "region_id,year,outcome_id,count,censor_code,adult_count\n"
      "a,2007,adm,,0,\n"
      "b,2007,adm,4,0,\n"
      "a,2008,adm,5,0,\n"
      "b,2008,adm,4,0,\n";
  expect(fx, "count required when censor_code is 0", "c0blank");

  fx = Fixture();
  fx.files["counts.csv"] += "b,2008,adm,4,0,\n";
  expect(fx, "duplicate cell", "dupe");

  fx = Fixture();
  fx.files["counts.csv"] =
      "region_id,year,outcome_id,count,censor_code,adult_count\n"
      "a,2007,adm,3,0,\n"
      "b,2007,adm,4,0,\n"
      "a,2008,adm,5,0,\n";
  expect(fx, "missing cell", "gap");

  fx = Fixture();
  fx.files["population.csv"] =
      "region_id,year,population\n"
      "a,2007,500\nb,2007,600\na,2008,510\n";
  expect(fx, "missing population", "popgap");

  fx = Fixture();
  fx.files["population.csv"] =
      "region_id,year,population\n"
      "a,2007,0\nb,2007,600\na,2008,510\nb,2008,610\n";
  expect(fx, "population must be positive", "popzero");

  fx = Fixture();
  fx.files["covariates.csv"] +=
      "a,2007,unused,3.0,,1\n"
      "b,2007,unused,4.0,,1\n"
      "a,2008,unused,5.0,,1\n"
      "b,2008,unused,6.0,,1\n";
  expect(fx, "not assigned to any design", "orphan");

  fx = Fixture();
  fx.files["survey.csv"] =
      "year_start,year_end,estimate,se\n"
      "2007,2007,0.05,0.003\n"
      "2008,2010,0.06,0.004\n";
  expect(fx, "ends past the count panel", "svspan");

  fx = Fixture();
  fx.files["covariates.csv"] =
      "region_id,year,variable,value,se,window\n"
      "a,2007,w1,1.5,,1\n"
      "b,2007,w1,2.5,,1\n"
      "a,2008,w1,0.5,,5\n"
      "b,2008,w1,3.5,,1\n"
      + fx.files["covariates.csv"].substr(fx.files["covariates.csv"].find("a,2007,pov"));
  expect(fx, "multi-year windows need a standard error", "window");
}

TEST_CASE("latent covariates may not be assigned to detection designs") {
  fs::path dir = fresh_dir("latentdet");
  CovariateAssignment assign;
  assign.risk = {"w1", "pov"};
  assign.detection["adm"] = {"pov"};
  CHECK_THROWS_WITH_AS(Fixture().load(dir, assign),
                       doctest::Contains("may only enter the risk design"),
                       ValidationError);
  CovariateAssignment unknown;
  unknown.risk = {"w1", "pov"};
  unknown.detection["nosuch"] = {"w1"};
  CHECK_THROWS_WITH_AS(Fixture().load(fresh_dir("unkout"), unknown),
                       doctest::Contains("unknown outcome"), ValidationError);
}

TEST_CASE("generated datasets survive the write and load round trip") {
  ScenarioConfig sc;
  sc.grid_rows = 2;
  sc.grid_cols = 3;
  sc.T = 3;

  // Write through the simulate command path and reload through fit's path.
  fs::path dir = fresh_dir("roundtrip");
  KvConfig cfg;
  cfg["grid_rows"] = "2";
  cfg["grid_cols"] = "3";
  cfg["years"] = "3";
  write_kv_config_file((dir / "sim.txt").string(), cfg);
  CHECK(cli({"simulate", "--config", (dir / "sim.txt").string(), "--out",
             (dir / "sim").string(), "--seed", "31"}) == 0);
  DatasetPaths paths;
  paths.adjacency = (dir / "sim" / "adjacency.txt").string();
  paths.counts = (dir / "sim" / "counts.csv").string();
  paths.population = (dir / "sim" / "population.csv").string();
  paths.survey = (dir / "sim" / "survey.csv").string();
  paths.covariates = {(dir / "sim" / "covariates.csv").string()};
  CovariateAssignment assign;
  assign.risk = {"w1"};
  assign.detection["y1"] = {"x1_1"};
  assign.detection["y2"] = {"x2_1"};
  Dataset ds = load_dataset(paths, assign);
  // Same seed, same scenario: the reloaded panel matches the in-memory
  // generation (the command applies no censoring). The loader interns
  // regions in adjacency first-appearance order, which need not match the
  // generator's row-major grid order, so compare cells label by label.
  SimData direct = simulate_dataset(sc, 31, nullptr);
  REQUIRE(ds.graph.n_regions == direct.graph.n_regions);
  for (int j = 0; j < direct.graph.n_regions; ++j) {
    int i = ds.graph.label_index(direct.graph.region_labels[j]);
    REQUIRE(i >= 0);
    for (int t = 0; t < 3; ++t) {
      CHECK(ds.panel.outcomes[0].counts(i, t) ==
            direct.panel.outcomes[0].counts(j, t));
      CHECK(ds.panel.outcomes[1].counts(i, t) ==
            direct.panel.outcomes[1].counts(j, t));
      CHECK(ds.panel.population(i, t) == direct.panel.population(j, t));
    }
  }
  for (size_t r = 0; r < ds.survey.rows.size(); ++r) {
    CHECK(ds.survey.rows[r].estimate == direct.survey.rows[r].estimate);
  }
  // Standardization transforms regenerate from the same raw values (cell
  // order may differ, so sums can differ in the last ulp).
  CHECK(ds.panel.risk_design.cols[0].center ==
        doctest::Approx(direct.panel.risk_design.cols[0].center).epsilon(1e-14));
  CHECK(ds.panel.risk_design.cols[0].scale ==
        doctest::Approx(direct.panel.risk_design.cols[0].scale).epsilon(1e-14));
}

TEST_CASE("draws round trip bitwise and reject mismatched layouts") {
  fs::path dir = fresh_dir("draws");
  ChainOutput a;
  a.chain_index = 0;
  a.columns = {"x", "y"};
  a.n_kept = 3;
  a.draws = {0.1, 1.0 / 3.0, -2.5, 1e-300, 7.0, 0.049999999999999996};
  ChainOutput b = a;
  b.chain_index = 1;
  write_draws(dir.string(), {a, b});
  auto back = read_draws(dir.string());
  REQUIRE(back.size() == 2);
  CHECK(back[0].columns == a.columns);
  CHECK(back[0].draws == a.draws);
  CHECK(back[1].draws == b.draws);
  CHECK(back[0].n_kept == 3);

  fs::path empty = fresh_dir("draws_empty");
  CHECK_THROWS_AS(read_draws(empty.string()), ValidationError);
  CHECK_THROWS_AS(read_draws((empty / "nowhere").string()), ValidationError);

  write_text(dir / "draws_chain3.csv", "x,z\n1,2\n");
  CHECK_THROWS_WITH_AS(read_draws(dir.string()), doctest::Contains("columns differ"),
                       ValidationError);
}

TEST_CASE("summaries round trip through their csv form") {
  fs::path dir = fresh_dir("sums");
  std::vector<PosteriorSummary> s(2);
  s[0].name = "beta0_mu";
  s[0].mean = 0.05123;
  s[0].sd = 0.002;
  s[0].lower = 0.047;
  s[0].upper = 0.056;
  s[0].n_draws = 4000;
  s[1].name = "N[r1c1:1]";
  s[1].mean = 312.25;
  s[1].sd = 40.0;
  s[1].lower = 250.0;
  s[1].upper = 400.0;
  s[1].n_draws = 4000;
  write_summaries((dir / "summaries.csv").string(), s);
  auto back = read_summaries((dir / "summaries.csv").string());
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "beta0_mu");
  CHECK(back[0].mean == s[0].mean);
  CHECK(back[1].upper == s[1].upper);
  CHECK(back[1].n_draws == 4000);
}

TEST_CASE("the four commands compose into a reproducible pipeline") {
  fs::path dir = fresh_dir("pipeline");
  KvConfig sim_cfg;
  sim_cfg["grid_rows"] = "2";
  sim_cfg["grid_cols"] = "2";
  sim_cfg["years"] = "2";
  sim_cfg["pop_min"] = "2000";
  sim_cfg["pop_max"] = "6000";
  write_kv_config_file((dir / "sim.txt").string(), sim_cfg);
  fs::path simdir = dir / "sim";
  REQUIRE(cli({"simulate", "--config", (dir / "sim.txt").string(), "--out",
               simdir.string(), "--seed", "9", "--quiet"}) == 0);
  for (const char* f :
       {"adjacency.txt", "counts.csv", "population.csv", "covariates.csv",
        "survey.csv", "truth_n.csv", "truth_lambda.csv", "truth_p.csv",
        "truth_params.csv", "fit_config.txt", "manifest.json"}) {
    CHECK(fs::exists(simdir / f));
  }

  fs::path fitdir = dir / "fit";
  REQUIRE(cli({"fit", "--config", (simdir / "fit_config.txt").string(), "--out",
               fitdir.string(), "--iters", "120", "--burnin", "60", "--thin",
               "2", "--chains", "2", "--seed", "4", "--quiet"}) == 0);
  for (const char* f : {"draws_chain1.csv", "draws_chain2.csv", "diagnostics.csv",
                        "summaries.csv", "cells.csv", "manifest.json"}) {
    CHECK(fs::exists(fitdir / f));
  }
  auto chains = read_draws(fitdir.string());
  REQUIRE(chains.size() == 2);
  CHECK(chains[0].n_kept == 30);
  auto sums = read_summaries((fitdir / "summaries.csv").string());
  REQUIRE(!sums.empty());
  CHECK(sums[0].n_draws == 60);

  // Summaries recomputed from the stored draws agree exactly.
  fs::path sumdir = dir / "sum";
  REQUIRE(cli({"summarize", fitdir.string(), "--out", sumdir.string(),
               "--quiet"}) == 0);
  CsvTable longform = read_csv_file((sumdir / "summary_long.csv").string());
  int qcol = longform.need("quantity");
  int mcol = longform.need("mean");
  int rcol = longform.need("region");
  int ycol = longform.need("year");
  bool saw_beta0 = false, saw_cell = false;
  for (size_t r = 0; r < longform.rows.size(); ++r) {
    if (longform.at(r, qcol) == "beta0_mu") {
      saw_beta0 = true;
      CHECK(longform.at(r, rcol) == "");
      CHECK(longform.at(r, ycol) == "");
      for (const PosteriorSummary& s : sums) {
        if (s.name == "beta0_mu") {
          CHECK(parse_double(longform.at(r, mcol), "m") == s.mean);
        }
      }
    }
    if (longform.at(r, qcol) == "N" && longform.at(r, rcol) == "r1c1" &&
        longform.at(r, ycol) == "1") {
      saw_cell = true;
      for (const PosteriorSummary& s : sums) {
        if (s.name == "N[r1c1:1]") {
          CHECK(parse_double(longform.at(r, mcol), "m") == s.mean);
        }
      }
    }
  }
  CHECK(saw_beta0);
  CHECK(saw_cell);
  std::string manifest = read_text(sumdir / "manifest.json");
  CHECK(manifest.find("\"n_draws_total\": \"60\"") != std::string::npos);
  CHECK(manifest.find("\"n_draws_used\": \"60\"") != std::string::npos);

  // Thinning keeps every second retained row.
  fs::path sumdir2 = dir / "sum2";
  REQUIRE(cli({"summarize", fitdir.string(), "--out", sumdir2.string(), "--thin",
               "2", "--quiet"}) == 0);
  std::string manifest2 = read_text(sumdir2 / "manifest.json");
  CHECK(manifest2.find("\"n_draws_used\": \"30\"") != std::string::npos);

  // Summarize refuses to clobber its own input.
  CHECK(cli({"summarize", fitdir.string(), "--out", fitdir.string(), "--quiet"}) == 1);
}

TEST_CASE("evaluation reports are byte-identical across reruns") {
  fs::path dir = fresh_dir("evalrerun");
  KvConfig cfg;
  cfg["grid_rows"] = "2";
  cfg["grid_cols"] = "2";
  cfg["years"] = "2";
  cfg["replicates"] = "2";
  cfg["pop_min"] = "2000";
  cfg["pop_max"] = "6000";
  cfg["iters"] = "120";
  cfg["burnin"] = "60";
  cfg["thin"] = "2";
  cfg["chains"] = "1";
  cfg["threads"] = "1";
  write_kv_config_file((dir / "eval.txt").string(), cfg);
  REQUIRE(cli({"evaluate", "--config", (dir / "eval.txt").string(), "--out",
               (dir / "run1").string(), "--seed", "3", "--quiet"}) == 0);
  REQUIRE(cli({"evaluate", "--config", (dir / "eval.txt").string(), "--out",
               (dir / "run2").string(), "--seed", "3", "--quiet"}) == 0);
  CHECK(read_text(dir / "run1" / "replicates.csv") ==
        read_text(dir / "run2" / "replicates.csv"));
  CHECK(read_text(dir / "run1" / "aggregate.csv") ==
        read_text(dir / "run2" / "aggregate.csv"));
  CHECK(!read_text(dir / "run1" / "replicates.csv").empty());

  CsvTable rep = read_csv_file((dir / "run1" / "replicates.csv").string());
  // Two replicates, three models, four metrics each.
  CHECK(rep.rows.size() == 24);
  CsvTable agg = read_csv_file((dir / "run1" / "aggregate.csv").string());
  int mcol = agg.need("model");
  int metcol = agg.need("metric");
  bool wins_row = false, cov_row = false;
  for (size_t r = 0; r < agg.rows.size(); ++r) {
    if (agg.at(r, mcol) == "proposed_vs_baseline" &&
        agg.at(r, metcol).rfind("wins_", 0) == 0) {
      wins_row = true;
    }
    if (agg.at(r, mcol) == "truth_coverage") cov_row = true;
  }
  CHECK(wins_row);
  CHECK(cov_row);
}

TEST_CASE("commands map failures onto the exit code contract") {
  fs::path dir = fresh_dir("exitcodes");
  CHECK(cli({}) != 0);                    // missing subcommand
  CHECK(cli({"frobnicate"}) != 0);        // unknown subcommand
  CHECK(cli({"fit"}) == 1);               // --config required
  CHECK(cli({"fit", "--config", (dir / "none.txt").string()}) == 1);
  CHECK(cli({"summarize", (dir / "missing").string(), "--out",
             (dir / "o").string()}) == 1);

  // Validation failure inside the dataset: bad censor code.
  Fixture fx;
  fx.files["counts.csv"] =
      "region_id,year,outcome_id,count,censor_code,adult_count\n"
      "a,2007,adm,3,7,\n"
      "b,2007,adm,4,0,\n"
      "a,2008,adm,5,0,\n"
      "b,2008,adm,4,0,\n";
  for (const auto& [name, content] : fx.files) write_text(dir / name, content);
  KvConfig fit_cfg;
  fit_cfg["adjacency"] = "adjacency.txt";
  fit_cfg["counts"] = "counts.csv";
  fit_cfg["population"] = "population.csv";
  fit_cfg["survey"] = "survey.csv";
  fit_cfg["covariates"] = "covariates.csv";
  fit_cfg["risk_covariates"] = "w1,pov";
  fit_cfg["iters"] = "40";
  fit_cfg["burnin"] = "20";
  write_kv_config_file((dir / "fit.txt").string(), fit_cfg);
  CHECK(cli({"fit", "--config", (dir / "fit.txt").string(), "--out",
             (dir / "out").string(), "--quiet"}) == 1);

  // Runtime failure: the output directory path is an existing file.
  Fixture ok;
  for (const auto& [name, content] : ok.files) write_text(dir / name, content);
  write_text(dir / "blocked", "not a directory");
  CHECK(cli({"fit", "--config", (dir / "fit.txt").string(), "--out",
             (dir / "blocked").string(), "--quiet"}) == 2);
}
