#pragma once

// Run configuration for the command-line front end. The file is YAML; every
// key is listed in README.md and unknown keys are rejected.

#include "skewtvb/scenarios.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace skewtvb::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScenarioConfig {
  std::string type;  // tracking | single_epoch | crlb_model
  std::size_t K = 1;
  double q = 0.0;
  double delta = 0.0;
  double nu = 4.0;
  double delta_c = 0.0;
  std::uint64_t constellation_seed = kPresetConstellationSeed;
};

struct IterationSweep {
  std::vector<int> max_iters;
  double tol = 0.0;
};

struct TruncBenchConfig {
  std::vector<int> dims{2, 3, 4};
  std::size_t problems = 200;
  std::uint64_t oracle_samples = 100000;
  /// Rejection-oracle proposals per problem; past that the case is recorded
  /// as infeasible and scored against a Gibbs oracle instead.
  std::uint64_t oracle_budget = 2000000;
  std::vector<double> outlier_c{5.0, 10.0, 25.0};
  std::size_t outlier_cases = 100;
  std::uint64_t gibbs_sweeps = 20000;
  std::uint64_t constellation_seed = kPresetConstellationSeed;
  bool timing = false;
};

struct CrlbConfig {
  std::size_t K = 50;
  std::vector<double> delta_c{0.0, 0.5, 1.0, 2.0, 5.0};
  std::vector<double> nu{3.0, 5.0, 10.0, kInfiniteNu};
  std::size_t mse_runs = 0;
  Index particles = 2000;
  bool stf_mse = false;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t runs = 1;
  int jobs = 1;
  std::string out_dir = "out";
  std::optional<std::string> input;
  std::optional<ScenarioConfig> scenario;
  std::vector<EstimatorSpec> estimators;
  std::optional<IterationSweep> iteration_sweep;
  std::optional<TruncBenchConfig> trunc_bench;
  std::optional<CrlbConfig> crlb;
  /// FNV-1a hash of the config file bytes.
  std::string hash;
};

/// Throws ConfigError naming the offending key.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

}  // namespace skewtvb::cli
