#include "config.hpp"

#include "skewtvb/io.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace skewtvb::cli {

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void check_keys(const YAML::Node& node, const std::string& path,
                const std::set<std::string>& allowed) {
  if (!node.IsMap()) {
    throw ConfigError("config key '" + (path.empty() ? std::string("<root>") : path) +
                      "' must be a mapping");
  }
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + join(path, key) + "'");
  }
}

template <typename T>
T convert(const YAML::Node& n, const std::string& full) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("config key '" + full + "' has an invalid value");
  }
}

template <typename T>
T required(const YAML::Node& node, const std::string& path, const std::string& key) {
  const YAML::Node n = node[key];
  if (!n) throw ConfigError("missing config key '" + join(path, key) + "'");
  return convert<T>(n, join(path, key));
}

template <typename T>
T optional_or(const YAML::Node& node, const std::string& path, const std::string& key, T fallback) {
  const YAML::Node n = node[key];
  if (!n) return fallback;
  return convert<T>(n, join(path, key));
}

double parse_nu(const YAML::Node& n, const std::string& full) {
  if (n.IsScalar()) {
    const std::string s = n.Scalar();
    if (s == "inf" || s == "infinity" || s == ".inf") return kInfiniteNu;
  }
  const double v = convert<double>(n, full);
  if (!(v > 0.0)) throw ConfigError("config key '" + full + "' must be positive");
  return std::isinf(v) ? kInfiniteNu : v;
}

template <typename T>
std::vector<T> list_of(const YAML::Node& node, const std::string& path, const std::string& key,
                       std::vector<T> fallback) {
  const YAML::Node n = node[key];
  if (!n) return fallback;
  const std::string full = join(path, key);
  if (!n.IsSequence() || n.size() == 0) {
    throw ConfigError("config key '" + full + "' must be a non-empty list");
  }
  std::vector<T> out;
  for (const auto& item : n) out.push_back(convert<T>(item, full));
  return out;
}

ScenarioConfig parse_scenario(const YAML::Node& n) {
  const std::string path = "scenario";
  check_keys(n, path, {"type", "K", "q", "delta", "nu", "delta_c", "constellation_seed"});
  ScenarioConfig s;
  s.type = required<std::string>(n, path, "type");
  s.constellation_seed =
      optional_or<std::uint64_t>(n, path, "constellation_seed", kPresetConstellationSeed);
  if (s.type == "tracking") {
    s.K = required<std::size_t>(n, path, "K");
    s.q = required<double>(n, path, "q");
    s.delta = required<double>(n, path, "delta");
    s.nu = parse_nu(n["nu"] ? n["nu"] : YAML::Node(4.0), "scenario.nu");
  } else if (s.type == "single_epoch") {
    s.K = 1;
    s.delta = required<double>(n, path, "delta");
    s.nu = kInfiniteNu;
  } else if (s.type == "crlb_model") {
    s.K = required<std::size_t>(n, path, "K");
    s.delta_c = required<double>(n, path, "delta_c");
    if (!n["nu"]) throw ConfigError("missing config key 'scenario.nu'");
    s.nu = parse_nu(n["nu"], "scenario.nu");
  } else {
    throw ConfigError("config key 'scenario.type' must be tracking, single_epoch or crlb_model");
  }
  if (s.q < 0.0) throw ConfigError("config key 'scenario.q' must be >= 0");
  return s;
}

EstimatorSpec parse_estimator(const YAML::Node& n, const std::string& path, std::uint64_t seed,
                              std::size_t index) {
  check_keys(n, path, {"name", "label", "max_iters", "tol", "ordering", "particles", "gate"});
  EstimatorSpec e;
  const std::string name = required<std::string>(n, path, "name");
  try {
    e.kind = estimator_from_string(name);
  } catch (const InvalidParameter&) {
    throw ConfigError("config key '" + join(path, "name") + "': unknown estimator '" + name + "'");
  }
  e.label = optional_or<std::string>(n, path, "label", "");
  e.vb.max_iters = optional_or<int>(n, path, "max_iters", 5);
  e.vb.convergence_tol = optional_or<double>(n, path, "tol", 1e-6);
  const std::string ordering = optional_or<std::string>(n, path, "ordering", "optimal");
  if (ordering == "random") {
    e.vb.ordering = ordering::Random{derive_seed(seed, {0x0dde, index})};
  } else if (ordering != "optimal") {
    throw ConfigError("config key '" + join(path, "ordering") + "' must be optimal or random");
  }
  e.n_particles = optional_or<Index>(n, path, "particles", 2000);
  e.gate_quantile = optional_or<double>(n, path, "gate", 0.99);
  if (e.vb.max_iters < 1) throw ConfigError("config key '" + join(path, "max_iters") + "' must be >= 1");
  if (e.n_particles < 1) throw ConfigError("config key '" + join(path, "particles") + "' must be >= 1");
  if (!(e.gate_quantile > 0.0)) throw ConfigError("config key '" + join(path, "gate") + "' must be > 0");
  return e;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  check_keys(root, "", {"seed", "runs", "jobs", "out", "input", "scenario", "estimators",
                        "iteration_sweep", "trunc_bench", "crlb"});
  RunConfig cfg;
  cfg.hash = fnv1a_hex(text);
  cfg.seed = required<std::uint64_t>(root, "", "seed");
  cfg.runs = optional_or<std::size_t>(root, "", "runs", 1);
  cfg.jobs = optional_or<int>(root, "", "jobs", 1);
  cfg.out_dir = optional_or<std::string>(root, "", "out", "out");
  if (root["input"]) cfg.input = required<std::string>(root, "", "input");
  if (root["scenario"]) cfg.scenario = parse_scenario(root["scenario"]);
  if (const YAML::Node est = root["estimators"]) {
    if (!est.IsSequence() || est.size() == 0) {
      throw ConfigError("config key 'estimators' must be a non-empty list");
    }
    std::set<std::string> names;
    for (std::size_t i = 0; i < est.size(); ++i) {
      EstimatorSpec e =
          parse_estimator(est[i], "estimators[" + std::to_string(i) + "]", cfg.seed, i);
      if (!names.insert(e.name()).second) {
        throw ConfigError("config key 'estimators': duplicate estimator label '" + e.name() + "'");
      }
      cfg.estimators.push_back(std::move(e));
    }
  }
  if (const YAML::Node n = root["iteration_sweep"]) {
    const std::string path = "iteration_sweep";
    check_keys(n, path, {"max_iters", "tol"});
    IterationSweep s;
    s.max_iters = list_of<int>(n, path, "max_iters", {});
    if (s.max_iters.empty()) throw ConfigError("missing config key 'iteration_sweep.max_iters'");
    s.tol = optional_or<double>(n, path, "tol", 0.0);
    cfg.iteration_sweep = s;
  }
  if (const YAML::Node n = root["trunc_bench"]) {
    const std::string path = "trunc_bench";
    check_keys(n, path, {"dims", "problems", "oracle_samples", "outlier_c", "outlier_cases",
                         "gibbs_sweeps", "oracle_budget", "constellation_seed", "timing"});
    TruncBenchConfig t;
    t.dims = list_of<int>(n, path, "dims", t.dims);
    t.problems = optional_or<std::size_t>(n, path, "problems", t.problems);
    t.oracle_samples = optional_or<std::uint64_t>(n, path, "oracle_samples", t.oracle_samples);
    t.oracle_budget = optional_or<std::uint64_t>(n, path, "oracle_budget", t.oracle_budget);
    t.outlier_c = list_of<double>(n, path, "outlier_c", t.outlier_c);
    t.outlier_cases = optional_or<std::size_t>(n, path, "outlier_cases", t.outlier_cases);
    t.gibbs_sweeps = optional_or<std::uint64_t>(n, path, "gibbs_sweeps", t.gibbs_sweeps);
    t.constellation_seed =
        optional_or<std::uint64_t>(n, path, "constellation_seed", t.constellation_seed);
    t.timing = optional_or<bool>(n, path, "timing", false);
    for (int d : t.dims) {
      if (d < 1 || d > 12) throw ConfigError("config key 'trunc_bench.dims' entries must be in 1..12");
    }
    if (t.oracle_samples < 100) {
      throw ConfigError("config key 'trunc_bench.oracle_samples' must be >= 100");
    }
    if (t.gibbs_sweeps < 100) {
      throw ConfigError("config key 'trunc_bench.gibbs_sweeps' must be >= 100");
    }
    cfg.trunc_bench = t;
  }
  if (const YAML::Node n = root["crlb"]) {
    const std::string path = "crlb";
    check_keys(n, path, {"K", "delta_c", "nu", "mse_runs", "particles", "stf_mse"});
    CrlbConfig c;
    c.K = optional_or<std::size_t>(n, path, "K", c.K);
    c.delta_c = list_of<double>(n, path, "delta_c", c.delta_c);
    if (const YAML::Node nus = n["nu"]) {
      if (!nus.IsSequence() || nus.size() == 0) {
        throw ConfigError("config key 'crlb.nu' must be a non-empty list");
      }
      c.nu.clear();
      for (const auto& item : nus) c.nu.push_back(parse_nu(item, "crlb.nu"));
    }
    for (double v : c.nu) {
      if (!(v > 2.0)) throw ConfigError("config key 'crlb.nu' entries must exceed 2");
    }
    c.mse_runs = optional_or<std::size_t>(n, path, "mse_runs", 0);
    c.particles = optional_or<Index>(n, path, "particles", 2000);
    c.stf_mse = optional_or<bool>(n, path, "stf_mse", false);
    if (c.K < 1) throw ConfigError("config key 'crlb.K' must be >= 1");
    cfg.crlb = c;
  }
  if (cfg.jobs < 1) throw ConfigError("config key 'jobs' must be >= 1");
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace skewtvb::cli
