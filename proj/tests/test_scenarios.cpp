#include "doctest.h"

#include "skewtvb/scenarios.hpp"
#include "skewtvb/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

using namespace skewtvb;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TEST_CASE("constellation generation") {
  const Matrix a = gen_constellation(7);
  const Matrix b = gen_constellation(7);
  CHECK(a == b);
  CHECK(a != gen_constellation(8));
  CHECK(a.rows() == 8);
  for (Index i = 0; i < a.rows(); ++i) {
    CHECK(a.row(i).norm() > 1.9e7);
    // Elevation above the horizon of the local z axis.
    CHECK(a(i, 2) / a.row(i).norm() > std::sin(10.0 * 3.14159265358979 / 180.0));
  }
  Matrix G(8, 4);
  for (Index i = 0; i < 8; ++i) {
    G.block<1, 3>(i, 0) = -a.row(i) / a.row(i).norm();
    G(i, 3) = 1.0;
  }
  CHECK(Eigen::FullPivLU<Matrix>(G).rank() == 4);
  CHECK(gdop(a) < 6.0);
  CHECK(preset_constellation() == gen_constellation(kPresetConstellationSeed));
}

TEST_CASE("negative outlier injection") {
  Vector e(4);
  e << 0.5, -1.0, 2.0, 0.1;
  const OutlierInjection inj = inject_negative_outlier(e, 10.0, 3, 20.0);
  REQUIRE(inj.index >= 0);
  REQUIRE(inj.index < 4);
  for (Index i = 0; i < 4; ++i) {
    if (i == inj.index) {
      CHECK(inj.e(i) == doctest::Approx(-1.0 - 10.0 * std::sqrt(401.0)));
    } else {
      CHECK(inj.e(i) == e(i));
    }
  }
  // The minimum is capped at zero when every component is positive.
  const OutlierInjection pos = inject_negative_outlier(Vector::Ones(3), 5.0, 4, 0.0);
  CHECK(pos.e(pos.index) == doctest::Approx(-5.0));
  CHECK(inject_negative_outlier(e, 10.0, 3).index == inj.index);
  std::vector<int> hits(4, 0);
  for (std::uint64_t s = 0; s < 400; ++s) ++hits[inject_negative_outlier(e, 1.0, s).index];
  for (int h : hits) CHECK(h > 60);
}

TEST_CASE("scenario models") {
  const Matrix sats = preset_constellation();
  const PseudorangeScenario t = tracking_scenario(0.5, 5.0, 4.0, 100, sats);
  const StateSpaceModel m = t.model();
  CHECK_NOTHROW(m.validate());
  CHECK(m.state_dim() == 4);
  CHECK(m.meas_dim() == 8);
  CHECK(m.Q(0, 0) == doctest::Approx(0.25));
  CHECK(m.Q(3, 3) == 0.0);

  const StateSpaceModel c = crlb_study_model(1.0, 4.0);
  CHECK_NOTHROW(c.validate());
  const UnivariateSkewT d = c.noise.component(0);
  CHECK(st_mean(d) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(st_variance(d) == doctest::Approx(25.0).epsilon(1e-12));
}

TEST_CASE("simulation is seeded") {
  const StateSpaceModel m = crlb_study_model(1.0, 4.0);
  const SimulatedRun a = simulate(m, 30, 5), b = simulate(m, 30, 5), c = simulate(m, 30, 6);
  CHECK(a.x.size() == 30);
  for (std::size_t k = 0; k < 30; ++k) {
    CHECK(a.x[k] == b.x[k]);
    CHECK(a.y[k] == b.y[k]);
  }
  CHECK(a.y[0] != c.y[0]);
  CHECK(simulate(m, 0, 5).y.empty());
}

TEST_CASE("estimator results do not depend on order or thread count") {
  const StateSpaceModel m = crlb_study_model(2.0, 5.0);
  const auto runs = simulate_runs(m, 15, 6, 42);
  EstimatorSpec stf, pf, kf;
  stf.kind = EstimatorKind::STF;
  pf.kind = EstimatorKind::PF;
  pf.n_particles = 300;
  kf.kind = EstimatorKind::KFGated;
  const auto a = evaluate_estimators(m, 1, runs, {stf, pf, kf}, 42, 1, false);
  const auto b = evaluate_estimators(m, 1, runs, {kf, pf}, 42, 3, false);
  CHECK(a[1].report.per_run_rmse == b[1].report.per_run_rmse);
  CHECK(a[2].report.per_run_rmse == b[0].report.per_run_rmse);
  CHECK(a[0].report.estimator == "stf");
  const auto again = simulate_runs(m, 15, 6, 42, 4);
  for (std::size_t r = 0; r < runs.size(); ++r) CHECK(again[r].y == runs[r].y);
}

TEST_CASE("estimator names round trip") {
  for (EstimatorKind k : {EstimatorKind::STF, EstimatorKind::STS, EstimatorKind::KFGated,
                          EstimatorKind::RTSSGated, EstimatorKind::PF}) {
    CHECK(estimator_from_string(to_string(k)) == k);
  }
  CHECK_THROWS(estimator_from_string("ekf"));
}

TEST_CASE("exact filter NEES matches the state dimension") {
  const StateSpaceModel m = crlb_study_model(0.0, kInf);
  EstimatorSpec stf;
  const auto reports = run_mc_study({m, 20, 2}, {stf}, 500, 9);
  const MetricReport& r = reports[0];
  CHECK(r.n_failed == 0);
  // Per-run NEES averages 20 chi-square(2) draws, so its spread is about 0.45.
  CHECK(r.nees_mean == doctest::Approx(2.0).epsilon(0.05));
  CHECK(r.nees_quantiles.size() == 5);
  CHECK(std::is_sorted(r.nees_quantiles.begin(), r.nees_quantiles.end()));
}

TEST_CASE("sign test") {
  std::vector<double> a(20, 1.0), b(20, 2.0);
  SignTest t = sign_test(a, b);
  CHECK(t.negative == 20);
  CHECK(t.positive == 0);
  CHECK(t.p_value == doctest::Approx(2.0 * std::pow(0.5, 20)));
  b[0] = 1.0;  // zero difference dropped
  t = sign_test(a, b);
  CHECK(t.negative == 19);
  CHECK(t.p_value == doctest::Approx(2.0 * std::pow(0.5, 19)));
  std::vector<double> c{1, 2, 3, 4}, d{2, 1, 4, 3};
  CHECK(sign_test(c, d).p_value == doctest::Approx(1.0));
  CHECK_THROWS_AS(sign_test(c, {1.0}), InvalidParameter);
}

TEST_CASE("quantile interpolation") {
  const std::vector<double> v{4.0, 1.0, 3.0, 2.0};
  CHECK(quantile(v, 0.0) == 1.0);
  CHECK(quantile(v, 1.0) == 4.0);
  CHECK(quantile(v, 0.5) == doctest::Approx(2.5));
  CHECK(quantile(v, 0.25) == doctest::Approx(1.75));
}

TEST_CASE("outlier study case") {
  const PseudorangeScenario sc = single_epoch_scenario(20.0, preset_constellation());
  const OutlierCase c = outlier_case(sc, 10.0, 3);
  CHECK(c.n_x == 4);
  CHECK(c.problem.mu.size() == 12);
  CHECK(c.problem.truncated.size() == 8);
  const OutlierComparison cmp = compare_orderings(c, 3, 20000);
  CHECK(std::isfinite(cmp.dist_topt));
  CHECK(std::isfinite(cmp.dist_trand));
  CHECK(cmp.oracle_se < 0.05);
}

TEST_CASE("parallel_for visits every index once") {
  std::vector<int> seen(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { seen[i] += 1; });
  CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
}
