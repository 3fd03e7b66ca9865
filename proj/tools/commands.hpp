#pragma once

#include "config.hpp"

#include <string>

namespace skewtvb::cli {

/// Exit codes.
constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> runs;
  std::optional<int> jobs;
};

void apply_overrides(RunConfig& cfg, const Overrides& o);

/// Each command writes into cfg.out_dir and returns an exit code; configuration
/// problems surface as ConfigError, numeric ones as skewtvb::Error.
int cmd_simulate(const RunConfig& cfg);
int cmd_estimate(const RunConfig& cfg);
int cmd_trunc_bench(const RunConfig& cfg);
int cmd_crlb(const RunConfig& cfg);

}  // namespace skewtvb::cli
