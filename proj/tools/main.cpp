#include "commands.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace skewtvb::cli;

struct Invocation {
  std::string config_path;
  Overrides overrides;
};

CLI::App* add_command(CLI::App& app, const char* name, const char* help, Invocation& inv) {
  CLI::App* sub = app.add_subcommand(name, help);
  sub->add_option("--config", inv.config_path, "YAML run configuration")->required();
  sub->add_option("--seed", inv.overrides.seed, "root seed (overrides the config)");
  sub->add_option("--out", inv.overrides.out_dir, "output directory");
  sub->add_option("--runs", inv.overrides.runs, "Monte-Carlo runs");
  sub->add_option("--jobs", inv.overrides.jobs, "worker threads");
  return sub;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skew-t variational Bayes filtering experiments"};
  app.require_subcommand(1);
  Invocation inv;
  CLI::App* simulate = add_command(app, "simulate", "write ground truth and measurements", inv);
  CLI::App* estimate = add_command(app, "estimate", "run estimators and score them", inv);
  CLI::App* bench = add_command(app, "trunc-bench", "compare truncation orderings", inv);
  CLI::App* crlb = add_command(app, "crlb", "tabulate Cramer-Rao bounds", inv);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig cfg = load_config(inv.config_path);
    apply_overrides(cfg, inv.overrides);
    if (simulate->parsed()) return cmd_simulate(cfg);
    if (estimate->parsed()) return cmd_estimate(cfg);
    if (bench->parsed()) return cmd_trunc_bench(cfg);
    if (crlb->parsed()) return cmd_crlb(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const skewtvb::InvalidParameter& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const skewtvb::Error& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitOk;
}
