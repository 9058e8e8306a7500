// Command line surface: fit, simulate, evaluate, summarize. Each command
// reads a key=value config (flags override file values), writes its outputs
// plus one manifest into the output directory, and maps validation failures
// to exit status 1 and runtime failures to 2.
#pragma once

#include <cstdint>
#include <string>

namespace abund {

struct CliOptions {
  std::string config_path;
  std::string out_dir = ".";
  std::string run_dir;  // summarize input
  bool quiet = false;
  bool has_seed = false, has_chains = false, has_iters = false;
  bool has_burnin = false, has_thin = false;
  uint64_t seed = 1;
  int chains = 0;
  long long iters = 0;
  long long burnin = 0;
  int thin = 1;
};

int cmd_fit(const CliOptions& opt);
int cmd_simulate(const CliOptions& opt);
int cmd_evaluate(const CliOptions& opt);
int cmd_summarize(const CliOptions& opt);

// Parses arguments, dispatches, and converts exceptions to exit codes.
int run_cli(int argc, char** argv);

}  // namespace abund
