#include "commands.hpp"

#include "skewtvb/crlb.hpp"
#include "skewtvb/io.hpp"
#include "skewtvb/scenarios.hpp"
#include "skewtvb/tmnd.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

namespace skewtvb::cli {

namespace fs = std::filesystem;

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.runs) cfg.runs = *o.runs;
  if (o.jobs) {
    if (*o.jobs < 1) throw ConfigError("--jobs must be >= 1");
    cfg.jobs = *o.jobs;
  }
}

namespace {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::ofstream open_output(const RunConfig& cfg, const std::string& name) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + cfg.out_dir + "': " + ec.message());
  const fs::path path = fs::path(cfg.out_dir) / name;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

void csv_preamble(std::ostream& os, const RunConfig& cfg, const std::string& command) {
  os << "# command=" << command << " config_hash=" << cfg.hash << " seed=" << cfg.seed << '\n';
}

FileHeader file_header(const RunConfig& cfg) {
  FileHeader h;
  h.config_hash = cfg.hash;
  h.seed = cfg.seed;
  return h;
}

const ScenarioConfig& need_scenario(const RunConfig& cfg) {
  if (!cfg.scenario) throw ConfigError("missing config key 'scenario'");
  return *cfg.scenario;
}

struct BuiltScenario {
  StateSpaceModel model;
  std::size_t K = 1;
  Index error_dims = 1;
};

BuiltScenario build_scenario(const ScenarioConfig& s) {
  BuiltScenario b;
  b.K = s.K;
  if (s.type == "tracking") {
    b.model = tracking_scenario(s.q, s.delta, s.nu, s.K, gen_constellation(s.constellation_seed))
                  .model();
    b.error_dims = 3;
  } else if (s.type == "single_epoch") {
    b.model = single_epoch_scenario(s.delta, gen_constellation(s.constellation_seed)).model();
    b.error_dims = 3;
  } else {
    b.model = crlb_study_model(s.delta_c, s.nu);
    b.error_dims = 1;
  }
  return b;
}

std::vector<SimulatedRun> load_or_simulate(const RunConfig& cfg, const BuiltScenario& sc) {
  if (!cfg.input) return simulate_runs(sc.model, sc.K, cfg.runs, cfg.seed, cfg.jobs);
  std::ifstream in(*cfg.input, std::ios::binary);
  if (!in) throw IoError("cannot read input '" + *cfg.input + "'");
  try {
    return read_simulation(in).runs;
  } catch (const std::exception& e) {
    throw IoError("cannot parse input '" + *cfg.input + "': " + e.what());
  }
}

void write_metric_row(std::ostream& os, const MetricReport& r) {
  os << r.estimator << ',' << r.n_runs << ',' << r.n_failed << ',' << format_double(r.rmse) << ','
     << format_double(r.rmse_se) << ',' << format_double(r.final_mse) << ','
     << format_double(r.final_mse_se) << ',' << format_double(r.nees_mean);
  for (double q : r.nees_quantiles) os << ',' << format_double(q);
  os << '\n';
}

}  // namespace

int cmd_simulate(const RunConfig& cfg) {
  const BuiltScenario sc = build_scenario(need_scenario(cfg));
  const std::vector<SimulatedRun> runs =
      simulate_runs(sc.model, sc.K, cfg.runs, cfg.seed, cfg.jobs);
  std::ofstream out = open_output(cfg, "simulation.jsonl");
  write_simulation(out, file_header(cfg), runs);
  return kExitOk;
}

int cmd_estimate(const RunConfig& cfg) {
  const BuiltScenario sc = build_scenario(need_scenario(cfg));
  if (cfg.estimators.empty() && !cfg.iteration_sweep) {
    throw ConfigError("missing config key 'estimators'");
  }
  const std::vector<SimulatedRun> runs = load_or_simulate(cfg, sc);
  for (const SimulatedRun& r : runs) {
    if (!r.x.empty() && r.x.front().size() != sc.model.state_dim()) {
      throw ConfigError("input tracks do not match the configured scenario");
    }
  }
  const std::vector<EstimatorResults> results = evaluate_estimators(
      sc.model, sc.error_dims, runs, cfg.estimators, cfg.seed, cfg.jobs, true);

  std::ofstream metrics = open_output(cfg, "metrics.csv");
  csv_preamble(metrics, cfg, "estimate");
  metrics << "estimator,n_runs,n_failed,rmse,rmse_se,final_mse,final_mse_se,nees_mean,"
             "nees_q05,nees_q25,nees_q50,nees_q75,nees_q95\n";
  bool any_failed = false;
  std::ostringstream failures;
  for (const EstimatorResults& res : results) {
    write_metric_row(metrics, res.report);
    std::vector<EstimateTrack> tracks;
    for (const auto& t : res.tracks) tracks.push_back(t ? *t : EstimateTrack{});
    FileHeader h = file_header(cfg);
    h.estimator = res.report.estimator;
    std::ofstream out = open_output(cfg, "tracks_" + res.report.estimator + ".jsonl");
    write_tracks(out, h, tracks);
    for (const std::string& f : res.report.failures) {
      any_failed = true;
      failures << res.report.estimator << ',' << '"' << f << '"' << '\n';
    }
  }

  if (cfg.iteration_sweep) {
    std::vector<EstimatorSpec> sweep;
    for (int m : cfg.iteration_sweep->max_iters) {
      EstimatorSpec e;
      e.kind = EstimatorKind::STF;
      e.vb.max_iters = m;
      e.vb.convergence_tol = cfg.iteration_sweep->tol;
      e.label = "stf_iters_" + std::to_string(m);
      sweep.push_back(e);
    }
    const auto sweep_results =
        evaluate_estimators(sc.model, sc.error_dims, runs, sweep, cfg.seed, cfg.jobs, false);
    std::ofstream out = open_output(cfg, "rmse_vs_iterations.csv");
    csv_preamble(out, cfg, "estimate");
    out << "max_iters,rmse,rmse_se,n_failed\n";
    for (std::size_t i = 0; i < sweep.size(); ++i) {
      const MetricReport& r = sweep_results[i].report;
      out << sweep[i].vb.max_iters << ',' << format_double(r.rmse) << ','
          << format_double(r.rmse_se) << ',' << r.n_failed << '\n';
      for (const std::string& f : r.failures) {
        any_failed = true;
        failures << r.estimator << ',' << '"' << f << '"' << '\n';
      }
    }
  }

  if (any_failed) {
    std::ofstream out = open_output(cfg, "failures.csv");
    csv_preamble(out, cfg, "estimate");
    out << "estimator,failure\n" << failures.str();
    std::cerr << "estimate: some runs failed; see " << (fs::path(cfg.out_dir) / "failures.csv")
              << '\n';
    return kExitNumeric;
  }
  return kExitOk;
}

int cmd_trunc_bench(const RunConfig& cfg) {
  if (!cfg.trunc_bench) throw ConfigError("missing config key 'trunc_bench'");
  const TruncBenchConfig& tb = *cfg.trunc_bench;
  using clock = std::chrono::steady_clock;

  struct Family {
    std::string name;
    std::vector<double> topt;
    std::vector<double> trand;
    std::size_t infeasible = 0;
    double topt_seconds = 0.0;
    double trand_seconds = 0.0;
  };
  std::vector<Family> families;

  for (int dim : tb.dims) {
    struct Case {
      bool infeasible = false;
      double topt = 0.0;
      double trand = 0.0;
      double t_opt = 0.0;
      double t_rand = 0.0;
    };
    std::vector<Case> cases(tb.problems);
    parallel_for(tb.problems, cfg.jobs, [&](std::size_t i) {
      const auto d = static_cast<std::uint64_t>(dim);
      Rng rng(derive_seed(cfg.seed, {1, d, i}));
      const TruncationProblem p = random_truncation_problem(dim, rng);
      Case& c = cases[i];
      const auto t0 = clock::now();
      const TruncationResult a = rec_trunc(p, ordering::Optimal{});
      const auto t1 = clock::now();
      OracleMoments oracle;
      try {
        oracle = tmnd_moments_oracle(p, tb.oracle_samples, derive_seed(cfg.seed, {2, d, i}),
                                     tb.oracle_budget);
      } catch (const OracleInfeasible&) {
        c.infeasible = true;
        Vector start = a.mu;
        for (Index k : p.truncated) start(k) = std::max(start(k), 1e-12);
        oracle = tmnd_moments_gibbs(p, start, tb.oracle_samples, derive_seed(cfg.seed, {2, d, i}));
      }
      const auto t1b = clock::now();
      const TruncationResult b =
          rec_trunc(p, ordering::Random{derive_seed(cfg.seed, {3, d, i})});
      const auto t2 = clock::now();
      c.topt = (a.mu - oracle.mean).norm();
      c.trand = (b.mu - oracle.mean).norm();
      c.t_opt = std::chrono::duration<double>(t1 - t0).count();
      c.t_rand = std::chrono::duration<double>(t2 - t1b).count();
    });
    Family f;
    f.name = "random_dim" + std::to_string(dim);
    for (const Case& c : cases) {
      if (c.infeasible) ++f.infeasible;
      f.topt.push_back(c.topt);
      f.trand.push_back(c.trand);
      f.topt_seconds += c.t_opt;
      f.trand_seconds += c.t_rand;
    }
    families.push_back(std::move(f));
  }

  const Matrix sats = gen_constellation(tb.constellation_seed);
  const PseudorangeScenario scenario = single_epoch_scenario(20.0, sats);
  for (std::size_t ci = 0; ci < tb.outlier_c.size(); ++ci) {
    const double c = tb.outlier_c[ci];
    std::vector<OutlierComparison> res(tb.outlier_cases);
    parallel_for(tb.outlier_cases, cfg.jobs, [&](std::size_t i) {
      const OutlierCase oc = outlier_case(scenario, c, derive_seed(cfg.seed, {4, ci, i}));
      res[i] = compare_orderings(oc, derive_seed(cfg.seed, {5, ci, i}), tb.gibbs_sweeps);
    });
    Family f;
    f.name = "outlier_c" + format_double(c);
    for (const OutlierComparison& r : res) {
      f.topt.push_back(r.dist_topt);
      f.trand.push_back(r.dist_trand);
    }
    families.push_back(std::move(f));
  }

  std::ofstream out = open_output(cfg, "trunc_bench.csv");
  csv_preamble(out, cfg, "trunc-bench");
  out << "family,method,n_cases,n_infeasible,q05,q25,q50,q75,q95,mean,sign_test_p\n";
  for (const Family& f : families) {
    const SignTest st = sign_test(f.topt, f.trand);
    for (int m = 0; m < 2; ++m) {
      const std::vector<double>& v = m == 0 ? f.topt : f.trand;
      out << f.name << ',' << (m == 0 ? "topt" : "trand") << ',' << v.size() << ','
          << f.infeasible;
      for (double p : {0.05, 0.25, 0.5, 0.75, 0.95}) {
        out << ',' << format_double(v.empty() ? std::numeric_limits<double>::quiet_NaN()
                                              : quantile(v, p));
      }
      double mean = 0.0;
      for (double x : v) mean += x;
      out << ',' << format_double(v.empty() ? 0.0 : mean / static_cast<double>(v.size())) << ','
          << format_double(st.p_value) << '\n';
    }
  }
  if (tb.timing) {
    std::ofstream t = open_output(cfg, "trunc_bench_timing.csv");
    csv_preamble(t, cfg, "trunc-bench");
    t << "family,topt_seconds_per_problem,trand_seconds_per_problem\n";
    for (const Family& f : families) {
      if (f.topt_seconds == 0.0) continue;
      const double n = static_cast<double>(f.topt.size());
      t << f.name << ',' << format_double(f.topt_seconds / n) << ','
        << format_double(f.trand_seconds / n) << '\n';
    }
  }
  return kExitOk;
}

int cmd_crlb(const RunConfig& cfg) {
  if (!cfg.crlb) throw ConfigError("missing config key 'crlb'");
  const CrlbConfig& c = *cfg.crlb;
  std::vector<double> deltas = c.delta_c;
  std::vector<double> nus = c.nu;
  std::sort(deltas.begin(), deltas.end());
  deltas.erase(std::unique(deltas.begin(), deltas.end()), deltas.end());
  std::sort(nus.begin(), nus.end());
  nus.erase(std::unique(nus.begin(), nus.end()), nus.end());

  std::ofstream out = open_output(cfg, "crlb.csv");
  csv_preamble(out, cfg, "crlb");
  out << "delta_c,nu,filter_bound,smoother_bound_mid";
  if (c.mse_runs > 0) out << ",pf_mse,pf_mse_se";
  if (c.mse_runs > 0 && c.stf_mse) out << ",stf_mse,stf_mse_se";
  out << '\n';
  std::size_t cell = 0;
  for (double dc : deltas) {
    for (double nu : nus) {
      const StateSpaceModel model = crlb_study_model(dc, nu);
      const FisherContext ctx = fisher_context(model.noise);
      const CrlbTrack track = crlb_filter_recursion(model, ctx, c.K);
      out << format_double(dc) << ',' << (is_infinite_nu(nu) ? "inf" : format_double(nu)) << ','
          << format_double(track.B_filt.back()(0, 0)) << ','
          << format_double(track.B_smooth[c.K / 2](0, 0));
      if (c.mse_runs > 0) {
        std::vector<EstimatorSpec> est;
        EstimatorSpec pf;
        pf.kind = EstimatorKind::PF;
        pf.n_particles = c.particles;
        est.push_back(pf);
        if (c.stf_mse) est.push_back(EstimatorSpec{});
        McStudy study{model, c.K, 1};
        const auto reports =
            run_mc_study(study, est, c.mse_runs, derive_seed(cfg.seed, {cell}), cfg.jobs);
        for (const MetricReport& r : reports) {
          out << ',' << format_double(r.final_mse) << ',' << format_double(r.final_mse_se);
        }
      }
      out << '\n';
      ++cell;
    }
  }
  return kExitOk;
}

}  // namespace skewtvb::cli
