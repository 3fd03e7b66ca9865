#include "doctest.h"

#include "commands.hpp"
#include "config.hpp"
#include "skewtvb/io.hpp"
#include "skewtvb/rng.hpp"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

using namespace skewtvb;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("skewtvb_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SKEWTVB_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string error_of(const std::string& yaml) {
  try {
    cli::parse_config(yaml);
  } catch (const cli::ConfigError& e) {
    return e.what();
  }
  return "";
}

bool same_double(double a, double b) {
  return (std::isnan(a) && std::isnan(b)) || a == b;
}

}  // namespace

TEST_CASE("double formatting round trips") {
  Rng rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(u(rng) * 300));
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("track files round trip") {
  Rng rng(2);
  std::vector<EstimateTrack> tracks(3);
  for (std::size_t r = 0; r < tracks.size(); ++r) {
    for (int k = 0; k < 4; ++k) {
      tracks[r].mean.push_back(standard_normal_vector(3, rng) * 1e5);
      const Matrix B = standard_normal_vector(9, rng).reshaped(3, 3);
      tracks[r].cov.push_back(B * B.transpose());
      StepDiagnostics d;
      if (k % 2 == 0) d.vb_iterations = k + 1;
      if (k == 1) d.lambda = standard_normal_vector(2, rng);
      if (k == 3) d.ess = 123.456;
      d.rejected_components = k;
      d.underflow_hits = 0;
      tracks[r].diagnostics.push_back(d);
    }
  }
  tracks[1].mean[2](1) = std::numeric_limits<double>::infinity();
  tracks[2] = EstimateTrack{};  // a failed run has no steps
  FileHeader h{"estimate", "0123456789abcdef", 42, "stf", 3};
  std::stringstream ss;
  write_tracks(ss, h, tracks);
  const TrackFile back = read_tracks(ss);
  CHECK(back.header.kind == "estimate");
  CHECK(back.header.config_hash == h.config_hash);
  CHECK(back.header.seed == 42);
  CHECK(back.header.estimator == "stf");
  REQUIRE(back.tracks.size() == 3);
  for (std::size_t r = 0; r < 3; ++r) {
    REQUIRE(back.tracks[r].size() == tracks[r].size());
    for (std::size_t k = 0; k < tracks[r].size(); ++k) {
      CHECK(back.tracks[r].mean[k] == tracks[r].mean[k]);
      // Only the upper triangle is stored; the original is exactly symmetric.
      CHECK(back.tracks[r].cov[k] == tracks[r].cov[k]);
      const StepDiagnostics& a = tracks[r].diagnostics[k];
      const StepDiagnostics& b = back.tracks[r].diagnostics[k];
      CHECK(a.vb_iterations == b.vb_iterations);
      CHECK(a.rejected_components == b.rejected_components);
      CHECK(a.ess == b.ess);
      CHECK(a.lambda.has_value() == b.lambda.has_value());
      if (a.lambda) CHECK(*a.lambda == *b.lambda);
    }
  }
  std::stringstream again;
  write_tracks(again, back.header, back.tracks);
  std::stringstream first;
  write_tracks(first, h, tracks);
  CHECK(again.str() == first.str());
}

TEST_CASE("simulation files round trip") {
  Rng rng(3);
  std::vector<SimulatedRun> runs(2);
  for (auto& r : runs) {
    for (int k = 0; k < 5; ++k) {
      r.x.push_back(standard_normal_vector(4, rng));
      r.y.push_back(standard_normal_vector(8, rng) * 2e7);
    }
  }
  runs[0].y[1](0) = std::nan("");
  std::stringstream ss;
  write_simulation(ss, {"simulation", "ff", 7, "", 2}, runs);
  const SimulationFile back = read_simulation(ss);
  REQUIRE(back.runs.size() == 2);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t k = 0; k < 5; ++k) {
      CHECK(back.runs[r].x[k] == runs[r].x[k]);
      for (Index i = 0; i < 8; ++i) CHECK(same_double(back.runs[r].y[k](i), runs[r].y[k](i)));
    }
  }
}

TEST_CASE("malformed files are rejected") {
  std::stringstream bad("{\"kind\": \"simulation\"\nnot json\n");
  CHECK_THROWS(read_simulation(bad));
  std::stringstream empty("");
  CHECK_THROWS(read_tracks(empty));
}

TEST_CASE("config errors name the key") {
  CHECK(error_of("runs: 3\n").find("'seed'") != std::string::npos);
  CHECK(error_of("seed: 1\nbogus: 2\n").find("'bogus'") != std::string::npos);
  CHECK(error_of("seed: 1\nscenario:\n  type: tracking\n  q: 1\n  delta: 1\n").find("'scenario.K'") !=
        std::string::npos);
  CHECK(error_of("seed: 1\nscenario:\n  type: crlb_model\n  K: 3\n  delta_c: 1\n  nu: 4\n  speed: 2\n")
            .find("'scenario.speed'") != std::string::npos);
  CHECK(error_of("seed: 1\nestimators:\n  - name: stf\n    iters: 3\n").find("'estimators[0].iters'") !=
        std::string::npos);
  CHECK(error_of("seed: 1\nestimators:\n  - name: ekf\n").find("estimators[0].name") != std::string::npos);
  CHECK(error_of("seed: 1\ncrlb:\n  nu: [3, -1]\n").find("crlb.nu") != std::string::npos);
  CHECK(error_of("seed: [1\n").find("YAML") != std::string::npos);
}

TEST_CASE("config parsing") {
  const cli::RunConfig cfg = cli::parse_config(
      "seed: 5\nruns: 3\nscenario:\n  type: crlb_model\n  K: 10\n  delta_c: 2\n  nu: inf\n"
      "estimators:\n  - name: stf\n    max_iters: 7\n    ordering: random\n  - name: pf\n    particles: 50\n");
  CHECK(cfg.seed == 5);
  CHECK(cfg.runs == 3);
  REQUIRE(cfg.scenario);
  CHECK(is_infinite_nu(cfg.scenario->nu));
  REQUIRE(cfg.estimators.size() == 2);
  CHECK(cfg.estimators[0].vb.max_iters == 7);
  CHECK(std::holds_alternative<ordering::Random>(cfg.estimators[0].vb.ordering));
  CHECK(cfg.estimators[1].n_particles == 50);
  CHECK(cfg.hash == fnv1a_hex(
      "seed: 5\nruns: 3\nscenario:\n  type: crlb_model\n  K: 10\n  delta_c: 2\n  nu: inf\n"
      "estimators:\n  - name: stf\n    max_iters: 7\n    ordering: random\n  - name: pf\n    particles: 50\n"));
  for (const char* name : {"tracking.yaml", "single_epoch.yaml", "trunc_bench.yaml", "crlb.yaml"}) {
    CHECK_NOTHROW(cli::load_config(std::string(SKEWTVB_CONFIG_DIR) + "/" + name));
  }
}

TEST_CASE("gated Kalman filter through the CLI reproduces the Kalman recursion") {
  TempDir tmp;
  write_file(tmp.path / "c.yaml",
             "seed: 4\nruns: 3\nout: " + tmp.path.string() +
                 "\nscenario:\n  type: crlb_model\n  K: 12\n  delta_c: 0\n  nu: inf\n"
                 "estimators:\n  - name: kf_gated\n    gate: 1.0\n");
  const cli::RunConfig cfg = cli::load_config((tmp.path / "c.yaml").string());
  REQUIRE(cli::cmd_simulate(cfg) == cli::kExitOk);
  cli::RunConfig est = cfg;
  est.input = (tmp.path / "simulation.jsonl").string();
  REQUIRE(cli::cmd_estimate(est) == cli::kExitOk);
  std::ifstream sim_in(tmp.path / "simulation.jsonl");
  const SimulationFile sim = read_simulation(sim_in);
  std::ifstream tr_in(tmp.path / "tracks_kf_gated.jsonl");
  const TrackFile tracks = read_tracks(tr_in);
  REQUIRE(tracks.tracks.size() == 3);
  const StateSpaceModel m = crlb_study_model(0.0, kInfiniteNu);
  for (std::size_t r = 0; r < 3; ++r) {
    GaussianBelief b = m.prior();
    for (std::size_t k = 0; k < 12; ++k) {
      if (k > 0) b = kf_predict(b, m.A, m.Q);
      b = kf_update(b, m.C, Matrix::Constant(1, 1, 25.0), sim.runs[r].y[k]);
      CHECK((tracks.tracks[r].mean[k] - b.mean).norm() < 1e-9 * std::max(1.0, b.mean.norm()));
      CHECK((tracks.tracks[r].cov[k] - b.cov).norm() < 1e-9 * b.cov.norm());
    }
  }
}

TEST_CASE("numeric failures produce a diagnostics file and exit code 3") {
  TempDir tmp;
  std::vector<SimulatedRun> runs(2);
  for (auto& r : runs) {
    for (int k = 0; k < 3; ++k) {
      r.x.push_back(Vector::Zero(2));
      r.y.push_back(Vector::Ones(1));
    }
  }
  runs[1].y[1](0) = std::nan("");
  {
    std::ofstream out(tmp.path / "sim.jsonl", std::ios::binary);
    write_simulation(out, {"simulation", "00", 1, "", 2}, runs);
  }
  write_file(tmp.path / "c.yaml", "seed: 1\nruns: 2\ninput: " + (tmp.path / "sim.jsonl").string() +
                                      "\nout: " + (tmp.path / "out").string() +
                                      "\nscenario:\n  type: crlb_model\n  K: 3\n  delta_c: 1\n  nu: 4\n"
                                      "estimators:\n  - name: stf\n");
  CHECK(run_cli("estimate --config " + (tmp.path / "c.yaml").string()) == 3);
  const std::string failures = slurp(tmp.path / "out" / "failures.csv");
  CHECK(failures.find("stf") != std::string::npos);
  CHECK(failures.find("run 1") != std::string::npos);
}

TEST_CASE("CLI exit codes") {
  TempDir tmp;
  CHECK(run_cli("") != 0);
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("simulate --config " + (tmp.path / "missing.yaml").string()) == 2);
  write_file(tmp.path / "bad.yaml", "seed: 1\nunknown: 2\n");
  CHECK(run_cli("simulate --config " + (tmp.path / "bad.yaml").string()) == 2);
  write_file(tmp.path / "noscen.yaml", "seed: 1\n");
  CHECK(run_cli("simulate --config " + (tmp.path / "noscen.yaml").string()) == 2);
  CHECK(run_cli("simulate --config " + (tmp.path / "noscen.yaml").string() + " --jobs 0") == 2);
}

TEST_CASE("zero-length tracks give header-only output") {
  TempDir tmp;
  write_file(tmp.path / "c.yaml", "seed: 1\nruns: 2\nscenario:\n  type: tracking\n  K: 0\n  q: 0.5\n  delta: 5\n");
  REQUIRE(run_cli("simulate --config " + (tmp.path / "c.yaml").string() + " --out " + tmp.path.string()) == 0);
  const std::string text = slurp(tmp.path / "simulation.jsonl");
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);
  CHECK(text.find("config_hash") != std::string::npos);
}

TEST_CASE("CLI commands are byte-identical under a fixed seed") {
  TempDir tmp;
  const std::string tracking =
      "seed: 9\nruns: 3\njobs: 2\nscenario:\n  type: tracking\n  K: 8\n  q: 0.5\n  delta: 5\n  nu: 4\n"
      "estimators:\n  - name: stf\n  - name: sts\n  - name: stf\n    label: stf_rand\n    ordering: random\n"
      "  - name: kf_gated\n  - name: rtss_gated\n  - name: pf\n    particles: 200\n"
      "iteration_sweep:\n  max_iters: [1, 3]\n";
  const std::string bench =
      "seed: 2\ntrunc_bench:\n  dims: [2, 3]\n  problems: 10\n  oracle_samples: 2000\n"
      "  outlier_c: [5]\n  outlier_cases: 4\n  gibbs_sweeps: 500\n";
  const std::string crlb =
      "seed: 3\ncrlb:\n  K: 10\n  delta_c: [1, 0]\n  nu: [inf, 4]\n  mse_runs: 3\n  particles: 100\n  stf_mse: true\n";
  write_file(tmp.path / "t.yaml", tracking);
  write_file(tmp.path / "b.yaml", bench);
  write_file(tmp.path / "c.yaml", crlb);
  for (const char* sub : {"a", "b"}) {
    const fs::path out = tmp.path / sub;
    REQUIRE(run_cli("simulate --config " + (tmp.path / "t.yaml").string() + " --out " + out.string()) == 0);
    REQUIRE(run_cli("estimate --config " + (tmp.path / "t.yaml").string() + " --out " + out.string()) == 0);
    REQUIRE(run_cli("trunc-bench --config " + (tmp.path / "b.yaml").string() + " --out " + out.string()) == 0);
    REQUIRE(run_cli("crlb --config " + (tmp.path / "c.yaml").string() + " --out " + out.string()) == 0);
  }
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(tmp.path / "a")) {
    const fs::path other = tmp.path / "b" / entry.path().filename();
    REQUIRE(fs::exists(other));
    CHECK_MESSAGE(slurp(entry.path()) == slurp(other), entry.path().filename().string());
    ++compared;
  }
  CHECK(compared >= 10);
  // Thread count does not change results.
  const fs::path serial = tmp.path / "serial";
  REQUIRE(run_cli("estimate --config " + (tmp.path / "t.yaml").string() + " --out " + serial.string() +
                  " --jobs 1") == 0);
  CHECK(slurp(serial / "metrics.csv") == slurp(tmp.path / "a" / "metrics.csv"));
  // A different seed changes the results but not the layout.
  const fs::path reseeded = tmp.path / "reseeded";
  REQUIRE(run_cli("simulate --config " + (tmp.path / "t.yaml").string() + " --out " + reseeded.string() +
                  " --seed 10") == 0);
  CHECK(slurp(reseeded / "simulation.jsonl") != slurp(tmp.path / "a" / "simulation.jsonl"));

  const std::string crlb_csv = slurp(tmp.path / "a" / "crlb.csv");
  CHECK(crlb_csv.rfind("# command=crlb", 0) == 0);
  // Rows are sorted by (delta_c, nu) whatever the config order.
  const auto p0 = crlb_csv.find("\n0,4,");
  const auto p1 = crlb_csv.find("\n0,inf,");
  const auto p2 = crlb_csv.find("\n1,4,");
  CHECK(p0 < p1);
  CHECK(p1 < p2);
}
