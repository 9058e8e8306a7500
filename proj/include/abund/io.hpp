// File formats: CSV tables, key=value configs, dataset ingestion with
// row-level validation, draw/diagnostic/summary writers, and the run
// manifest. All floating point output uses round-trip precision so read
// after write reproduces in-memory values exactly.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "abund/graph.hpp"
#include "abund/model.hpp"
#include "abund/sampler.hpp"

namespace abund {

inline constexpr const char* kVersion = "1.0.0";

std::string format_double(double v);
double parse_double(const std::string& s, const std::string& context);
long long parse_int(const std::string& s, const std::string& context);

struct CsvTable {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const;  // -1 when absent
  int need(const std::string& name) const;  // throws naming the file
  const std::string& at(size_t row, int c) const { return rows[row][c]; }
  std::string where(size_t row) const;  // "file:line" for error messages
};

CsvTable read_csv(std::istream& in, const std::string& source_name);
CsvTable read_csv_file(const std::string& path);
void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows);

// Plain-text configuration: one key = value per line, '#' starts a comment,
// blank lines skipped, repeated keys keep the last value.
using KvConfig = std::map<std::string, std::string>;
KvConfig read_kv_config(std::istream& in, const std::string& source_name);
KvConfig read_kv_config_file(const std::string& path);
void write_kv_config_file(const std::string& path, const KvConfig& cfg);

uint64_t fnv1a64(const void* data, size_t len);
std::string file_digest(const std::string& path);  // 16 hex characters

struct DatasetPaths {
  std::string adjacency;
  std::string counts;
  std::string population;
  std::string survey;
  std::vector<std::string> covariates;
};

// Which design each covariate variable feeds. Latent variables (rows with
// standard errors) may only appear under risk.
struct CovariateAssignment {
  std::vector<std::string> risk;
  std::map<std::string, std::vector<std::string>> detection;  // outcome id -> names
};

struct Dataset {
  AdjacencyGraph graph;
  SurveillancePanel panel;
  SurveyEstimates survey;
  int base_year = 1;  // calendar year of model year 1
};

// Reads and joins all inputs into a validated panel. Counts define the
// year range and outcome order; regions come from the adjacency file; any
// malformed or missing cell raises a ValidationError naming file and line.
Dataset load_dataset(const DatasetPaths& paths, const CovariateAssignment& assign);

// One draws_chain<k>.csv per chain: header of quantity names, one row per
// retained iteration.
void write_draws(const std::string& dir, const std::vector<ChainOutput>& chains);
std::vector<ChainOutput> read_draws(const std::string& dir);

// Long-format diagnostics: quantity, statistic, value.
void write_diagnostics(const std::string& path, const std::vector<ChainOutput>& chains);
void write_summaries(const std::string& path,
                     const std::vector<PosteriorSummary>& summaries);
std::vector<PosteriorSummary> read_summaries(const std::string& path);

struct RunManifest {
  std::string command;
  std::string version = kVersion;
  uint64_t seed = 0;
  std::map<std::string, std::string> inputs;  // path -> content digest
  KvConfig config;
  std::map<std::string, std::string> extras;
  std::string started_at;
  std::string finished_at;
};

void write_manifest(const std::string& dir, const RunManifest& m);

std::string iso8601_utc_now();

}  // namespace abund
