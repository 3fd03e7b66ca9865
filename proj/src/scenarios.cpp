#include "skewtvb/scenarios.hpp"

#include "skewtvb/linalg.hpp"
#include "skewtvb/pf.hpp"
#include "skewtvb/skewt.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <thread>

namespace skewtvb {

Matrix gen_constellation(std::uint64_t seed, Index n_sats) {
  if (n_sats < 4) throw InvalidParameter("gen_constellation: need at least 4 satellites");
  Rng rng(derive_seed(seed, {0x5a7}));
  std::uniform_real_distribution<double> azimuth(0.0, 2.0 * std::numbers::pi);
  const double min_el = 12.0 * std::numbers::pi / 180.0;
  std::uniform_real_distribution<double> sin_el(std::sin(min_el), 1.0);
  Matrix sats(n_sats, 3);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (Index i = 0; i < n_sats; ++i) {
      const double az = azimuth(rng);
      const double s = sin_el(rng);
      const double c = std::sqrt(1.0 - s * s);
      sats.row(i) << c * std::cos(az), c * std::sin(az), s;
    }
    sats *= kSatelliteRange;
    if (gdop(sats) < 6.0) return sats;
  }
  throw DegenerateGeometry("gen_constellation: no well-conditioned geometry found");
}

Matrix preset_constellation() { return gen_constellation(kPresetConstellationSeed); }

double gdop(const Matrix& sat_positions) {
  const LinearizedMeasurement lin = linearize_pseudorange(sat_positions, 3, Vector::Zero(4));
  const Matrix info = lin.C.transpose() * lin.C;
  Eigen::FullPivLU<Matrix> lu(info);
  if (lu.rank() < 4) return std::numeric_limits<double>::infinity();
  return std::sqrt(lu.inverse().trace());
}

OutlierInjection inject_negative_outlier(const Vector& e, double c, std::uint64_t seed,
                                         double delta) {
  if (e.size() == 0) throw InvalidParameter("inject_negative_outlier: empty noise vector");
  Rng rng(seed);
  std::uniform_int_distribution<Index> pick(0, e.size() - 1);
  OutlierInjection out{e, pick(rng)};
  out.e(out.index) = std::min(e.minCoeff(), 0.0) - c * std::sqrt(1.0 + delta * delta);
  return out;
}

StateSpaceModel PseudorangeScenario::model() const {
  StateSpaceModel m;
  const Index n_x = prior.mean.size();
  m.A = Matrix::Identity(n_x, n_x);
  m.Q = Q;
  m.noise = noise;
  m.x0 = prior.mean;
  m.P0 = prior.cov;
  m.measurement = std::make_shared<PseudorangeMeasurement>(sat_positions, 3, n_x);
  return m;
}

PseudorangeScenario tracking_scenario(double q, double delta, double nu, std::size_t K,
                                      const Matrix& sats) {
  if (!(q >= 0.0)) throw InvalidParameter("tracking_scenario: q must be >= 0");
  const Index n = sats.rows();
  PseudorangeScenario s;
  s.sat_positions = sats;
  s.prior.mean = Vector::Zero(4);
  s.prior.cov = Eigen::Vector4d(20.0 * 20.0, 20.0 * 20.0, 0.22 * 0.22, 0.75 * 0.75).asDiagonal();
  s.Q = Eigen::Vector4d(q * q, q * q, 0.2 * 0.2, 0.0).asDiagonal();
  s.noise = SkewTNoise::independent(Vector::Ones(n), Vector::Constant(n, delta),
                                    Vector::Constant(n, nu));
  s.K = K;
  return s;
}

PseudorangeScenario single_epoch_scenario(double delta, const Matrix& sats) {
  PseudorangeScenario s = tracking_scenario(0.0, delta, kInfiniteNu, 1, sats);
  s.prior.cov = Eigen::Vector4d(20.0 * 20.0, 20.0 * 20.0, 0.22 * 0.22, 0.1 * 0.1).asDiagonal();
  s.Q = Matrix::Zero(4, 4);
  return s;
}

StateSpaceModel crlb_study_model(double delta_c, double nu) {
  if (!(nu > 2.0)) throw InvalidParameter("crlb_study_model: need nu > 2");
  const UnivariateSkewT e = zero_mean_reparam(delta_c, nu, 25.0);
  StateSpaceModel m;
  m.A.resize(2, 2);
  m.A << 1.0, 1.0, 0.0, 1.0;
  m.Q.resize(2, 2);
  m.Q << 1.0 / 3.0, 0.5, 0.5, 1.0;
  m.C.resize(1, 2);
  m.C << 1.0, 0.0;
  m.noise = SkewTNoise::independent(Vector::Constant(1, e.sigma2), Vector::Constant(1, e.delta),
                                    Vector::Constant(1, e.nu), Vector::Constant(1, e.mu));
  m.x0 = Vector::Zero(2);
  m.P0 = 100.0 * Matrix::Identity(2, 2);
  return m;
}

SimulatedRun simulate(const StateSpaceModel& model, std::size_t K, std::uint64_t seed) {
  model.validate();
  SimulatedRun run;
  if (K == 0) return run;
  Rng state_rng(derive_seed(seed, {0}));
  const Index n_x = model.state_dim();
  Vector x = model.x0 + psd_factor(model.P0) * standard_normal_vector(n_x, state_rng);
  const Matrix noise = sample_noise(model.noise, static_cast<Index>(K), derive_seed(seed, {1}));
  for (std::size_t k = 0; k < K; ++k) {
    run.x.push_back(x);
    run.y.push_back(model.predict_measurement(k, x) + noise.col(static_cast<Index>(k)));
    x = model.A_at(k) * x + psd_factor(model.Q_at(k)) * standard_normal_vector(n_x, state_rng);
  }
  return run;
}

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::STF: return "stf";
    case EstimatorKind::STS: return "sts";
    case EstimatorKind::KFGated: return "kf_gated";
    case EstimatorKind::RTSSGated: return "rtss_gated";
    case EstimatorKind::PF: return "pf";
  }
  return "unknown";
}

EstimatorKind estimator_from_string(const std::string& name) {
  for (EstimatorKind k : {EstimatorKind::STF, EstimatorKind::STS, EstimatorKind::KFGated,
                          EstimatorKind::RTSSGated, EstimatorKind::PF}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidParameter("unknown estimator '" + name + "'");
}

EstimateTrack run_estimator(const EstimatorSpec& spec, const StateSpaceModel& model,
                            std::span<const Vector> ys, std::uint64_t pf_seed_value) {
  switch (spec.kind) {
    case EstimatorKind::STF: return stf_run(model, ys, spec.vb);
    case EstimatorKind::STS: return sts_run(model, ys, spec.vb);
    case EstimatorKind::KFGated: return kf_gated_run(model, ys, spec.gate_quantile);
    case EstimatorKind::RTSSGated: return rtss_gated_run(model, ys, spec.gate_quantile);
    case EstimatorKind::PF: return pf_run(model, ys, spec.n_particles, pf_seed_value);
  }
  throw InvalidParameter("run_estimator: unknown estimator");
}

std::uint64_t run_seed(std::uint64_t root, std::size_t run) { return derive_seed(root, {run, 0}); }

std::uint64_t pf_seed(std::uint64_t root, std::size_t run, EstimatorKind kind) {
  return derive_seed(root, {run, 1, static_cast<std::uint64_t>(kind)});
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace {

struct RunOutcome {
  bool failed = false;
  std::string failure;
  double rmse = 0.0;
  double final_sq = 0.0;
  double nees = 0.0;
};

RunOutcome score_track(const EstimateTrack& track, const SimulatedRun& run, Index dims) {
  RunOutcome out;
  double sq_sum = 0.0;
  double nees_sum = 0.0;
  const std::size_t K = run.x.size();
  for (std::size_t k = 0; k < K; ++k) {
    const Vector err = track.mean[k].head(dims) - run.x[k].head(dims);
    const double sq = err.squaredNorm();
    sq_sum += sq;
    const Matrix P = track.cov[k].topLeftCorner(dims, dims);
    Eigen::LDLT<Matrix> ldlt(symmetrized(P));
    const double nees = ldlt.info() == Eigen::Success && ldlt.isPositive()
                            ? err.dot(ldlt.solve(err))
                            : err.dot(pseudo_inverse(P) * err);
    nees_sum += nees;
    if (k + 1 == K) out.final_sq = sq;
  }
  out.rmse = std::sqrt(sq_sum / static_cast<double>(K));
  out.nees = nees_sum / static_cast<double>(K);
  if (!std::isfinite(out.rmse) || !std::isfinite(out.nees)) {
    out.failed = true;
    out.failure = "non-finite estimate";
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double se_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

std::vector<SimulatedRun> simulate_runs(const StateSpaceModel& model, std::size_t K,
                                        std::size_t n_runs, std::uint64_t seed, int jobs) {
  std::vector<SimulatedRun> runs(n_runs);
  parallel_for(n_runs, jobs, [&](std::size_t r) { runs[r] = simulate(model, K, run_seed(seed, r)); });
  return runs;
}

std::vector<EstimatorResults> evaluate_estimators(const StateSpaceModel& model, Index error_dims,
                                                  const std::vector<SimulatedRun>& runs,
                                                  const std::vector<EstimatorSpec>& estimators,
                                                  std::uint64_t seed, int jobs, bool keep_tracks) {
  model.validate();
  if (error_dims < 1 || error_dims > model.state_dim()) {
    throw InvalidParameter("evaluate_estimators: error_dims out of range");
  }
  const std::size_t n_runs = runs.size();
  const std::size_t n_est = estimators.size();
  std::vector<EstimatorResults> results(n_est);
  std::vector<std::vector<RunOutcome>> outcomes(n_est, std::vector<RunOutcome>(n_runs));
  for (EstimatorResults& res : results) res.tracks.resize(n_runs);
  parallel_for(n_runs, jobs, [&](std::size_t r) {
    for (std::size_t e = 0; e < n_est; ++e) {
      RunOutcome& o = outcomes[e][r];
      try {
        EstimateTrack track =
            run_estimator(estimators[e], model, runs[r].y, pf_seed(seed, r, estimators[e].kind));
        o = score_track(track, runs[r], error_dims);
        if (keep_tracks && !o.failed) results[e].tracks[r] = std::move(track);
      } catch (const Error& err) {
        o.failed = true;
        o.failure = err.what();
      }
    }
  });

  for (std::size_t e = 0; e < n_est; ++e) {
    MetricReport& rep = results[e].report;
    rep.estimator = estimators[e].name();
    rep.n_runs = n_runs;
    std::vector<double> rmse;
    std::vector<double> final_sq;
    std::vector<double> nees;
    for (std::size_t r = 0; r < n_runs; ++r) {
      const RunOutcome& o = outcomes[e][r];
      rep.run_seeds.push_back(run_seed(seed, r));
      if (o.failed) {
        ++rep.n_failed;
        rep.failures.push_back("run " + std::to_string(r) + ": " + o.failure);
        rep.per_run_rmse.push_back(std::numeric_limits<double>::quiet_NaN());
        rep.per_run_final_sq_error.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      rep.per_run_rmse.push_back(o.rmse);
      rep.per_run_final_sq_error.push_back(o.final_sq);
      rmse.push_back(o.rmse);
      final_sq.push_back(o.final_sq);
      nees.push_back(o.nees);
    }
    rep.rmse = mean_of(rmse);
    rep.rmse_se = se_of(rmse);
    rep.final_mse = mean_of(final_sq);
    rep.final_mse_se = se_of(final_sq);
    rep.nees_mean = mean_of(nees);
    for (double p : {0.05, 0.25, 0.5, 0.75, 0.95}) {
      rep.nees_quantiles.push_back(nees.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                : quantile(nees, p));
    }
  }
  return results;
}

std::vector<MetricReport> run_mc_study(const McStudy& study,
                                       const std::vector<EstimatorSpec>& estimators,
                                       std::size_t n_runs, std::uint64_t seed, int jobs) {
  const std::vector<SimulatedRun> runs = simulate_runs(study.model, study.K, n_runs, seed, jobs);
  std::vector<MetricReport> reports;
  for (EstimatorResults& res :
       evaluate_estimators(study.model, study.error_dims, runs, estimators, seed, jobs, false)) {
    reports.push_back(std::move(res.report));
  }
  return reports;
}

SignTest sign_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InvalidParameter("sign_test: samples must be paired");
  SignTest t;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]) || std::isnan(b[i])) continue;
    if (a[i] > b[i]) ++t.positive;
    if (a[i] < b[i]) ++t.negative;
  }
  const std::size_t n = t.positive + t.negative;
  if (n == 0) return t;
  const std::size_t m = std::min(t.positive, t.negative);
  // Two-sided exact binomial tail, 2 P(X <= m) with X ~ Bin(n, 1/2).
  double tail = 0.0;
  const double log_half_n = static_cast<double>(n) * std::log(0.5);
  for (std::size_t i = 0; i <= m; ++i) {
    const double log_choose = std::lgamma(static_cast<double>(n) + 1.0) -
                              std::lgamma(static_cast<double>(i) + 1.0) -
                              std::lgamma(static_cast<double>(n - i) + 1.0);
    tail += std::exp(log_choose + log_half_n);
  }
  t.p_value = std::min(1.0, 2.0 * tail);
  return t;
}

OutlierCase outlier_case(const PseudorangeScenario& scenario, double c, std::uint64_t seed) {
  const StateSpaceModel model = scenario.model();
  Rng rng(derive_seed(seed, {0}));
  const Index n_x = model.state_dim();
  OutlierCase out;
  out.n_x = n_x;
  out.truth = model.x0 + psd_factor(model.P0) * standard_normal_vector(n_x, rng);
  const Vector e = draw_noise(model.noise, rng);
  const OutlierInjection inj = inject_negative_outlier(e, c, derive_seed(seed, {1}));
  out.outlier_index = inj.index;
  const Vector y = model.predict_measurement(0, out.truth) + inj.e;
  const LinearizedMeasurement lin = model.measurement_at(0, model.x0);
  LambdaState lambda{Vector::Ones(model.meas_dim())};
  out.problem = joint_truncation_problem(model.prior(), lin.C, model.noise,
                                         lin.shifted(y) - model.noise.location, lambda);
  return out;
}

OutlierComparison compare_orderings(const OutlierCase& c, std::uint64_t seed,
                                    std::uint64_t n_sweeps) {
  const TruncationResult topt = rec_trunc(c.problem, ordering::Optimal{});
  const TruncationResult trand =
      rec_trunc(c.problem, ordering::Random{derive_seed(seed, {1})});
  const Index n_x = c.n_x;
  const Index n_u = c.problem.mu.size() - n_x;
  const Vector mu_u = c.problem.mu.tail(n_u);
  const Matrix S_uu = c.problem.sigma.bottomRightCorner(n_u, n_u);
  const Matrix S_xu = c.problem.sigma.topRightCorner(n_x, n_u);
  TruncationProblem u_problem{mu_u, S_uu, {}};
  for (Index i = 0; i < n_u; ++i) u_problem.truncated.push_back(i);
  const OracleMoments gibbs = tmnd_moments_gibbs(u_problem, topt.mu.tail(n_u).cwiseMax(1e-6),
                                                 n_sweeps, derive_seed(seed, {2}));
  // x | u is Gaussian, so the exact posterior mean follows from E[u].
  const Matrix map = spd_right_solve(S_xu, S_uu);
  const Vector x_oracle = c.problem.mu.head(n_x) + map * (gibbs.mean - mu_u);
  OutlierComparison out;
  out.dist_topt = (topt.mu.head(3) - x_oracle.head(3)).norm();
  out.dist_trand = (trand.mu.head(3) - x_oracle.head(3)).norm();
  out.oracle_se = (map.topRows(3).cwiseAbs() * gibbs.mean_se).maxCoeff();
  return out;
}

TruncationProblem random_truncation_problem(Index n, Rng& rng) {
  const Matrix B = Matrix::NullaryExpr(n, n, [&](Index, Index) {
    return std::normal_distribution<double>(0.0, 1.0)(rng);
  });
  TruncationProblem p;
  p.sigma = B * B.transpose() / static_cast<double>(n) + 0.2 * Matrix::Identity(n, n);
  symmetrize(p.sigma);
  p.mu = 1.5 * standard_normal_vector(n, rng);
  for (Index i = 0; i < n; ++i) p.truncated.push_back(i);
  return p;
}

double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw InvalidParameter("quantile: empty sample");
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

}  // namespace skewtvb
