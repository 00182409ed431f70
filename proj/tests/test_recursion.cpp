#include "doctest.h"

#include <cmath>

#include "groklab/analysis.hpp"
#include "groklab/recursion.hpp"

using namespace groklab;

TEST_CASE("simulate_contraction: zero remainder matches the closed form exactly") {
  RecursionConfig cfg;
  cfg.v0 = 100.0;
  cfg.eta = 1e-3;
  cfg.lambda = 1.0;
  cfg.c1 = 0.0;
  cfg.horizon = 2000;
  const std::vector<double> v = simulate_contraction(cfg);
  const double q = (1.0 - 1e-3) * (1.0 - 1e-3);
  for (long t : {0L, 1L, 100L, 2000L})
    CHECK(v[static_cast<std::size_t>(t)] ==
          doctest::Approx(100.0 * std::pow(q, static_cast<double>(t))).epsilon(1e-12));
}

TEST_CASE("simulate_contraction: per-step log decrement stays inside the Prop bounds") {
  RecursionConfig cfg;
  cfg.v0 = 1e4;
  cfg.eta = 1e-3;
  cfg.lambda = 1.0;
  cfg.c1 = 0.5;
  cfg.policy = RemainderPolicy::max_positive;
  cfg.horizon = 1000;
  const std::vector<double> v = simulate_contraction(cfg);
  const double el = cfg.eta * cfg.lambda;
  for (std::size_t t = 0; t + 1 < v.size(); ++t) {
    const double dec = std::log(v[t + 1]) - std::log(v[t]);
    CHECK(dec <= -2.0 * el * (1.0 - 5.0 * cfg.eta));
    CHECK(dec >= -2.0 * el * (1.0 + 5.0 * cfg.eta));
  }
}

TEST_CASE("simulate_contraction: every policy contracts monotonically when c1 < 1") {
  for (RemainderPolicy policy : {RemainderPolicy::zero, RemainderPolicy::max_positive,
                                 RemainderPolicy::max_negative, RemainderPolicy::random_sign}) {
    for (std::uint64_t seed = 0; seed < (policy == RemainderPolicy::random_sign ? 100u : 1u); ++seed) {
      RecursionConfig cfg;
      cfg.v0 = 50.0;
      cfg.eta = 1e-3;
      cfg.lambda = 1.0;
      cfg.c1 = 0.9;
      cfg.policy = policy;
      cfg.horizon = 500;
      cfg.seed = seed;
      const std::vector<double> v = simulate_contraction(cfg);
      for (std::size_t t = 0; t + 1 < v.size(); ++t) CHECK(v[t + 1] < v[t]);
    }
  }
}

TEST_CASE("crossing_time: closed form, trivial target, and two-sided band") {
  RecursionConfig cfg;
  cfg.v0 = 100.0;
  cfg.eta = 1e-3;
  cfg.lambda = 1.0;
  cfg.c1 = 0.0;
  cfg.horizon = 1200;
  const std::vector<double> v = simulate_contraction(cfg);

  CHECK(crossing_time(v, 100.0) == 0);

  const auto t = crossing_time(v, 100.0 * std::exp(-2.0));
  REQUIRE(t.has_value());
  const long expected = static_cast<long>(std::ceil(1.0 / std::abs(std::log(1.0 - 1e-3))));
  CHECK(*t == expected);
  CHECK(*t == 1000);

  CHECK_FALSE(crossing_time(v, 1e-9).has_value());

  // two-sided check across remainder policies
  for (RemainderPolicy policy : {RemainderPolicy::zero, RemainderPolicy::max_positive,
                                 RemainderPolicy::max_negative, RemainderPolicy::random_sign}) {
    RecursionConfig c2 = cfg;
    c2.c1 = 0.9;
    c2.policy = policy;
    c2.horizon = 3000;
    const std::vector<double> v2 = simulate_contraction(c2);
    const auto t2 = crossing_time(v2, 100.0 * std::exp(-2.0));
    REQUIRE(t2.has_value());
    const double t_ref = 2.0 / (2.0 * c2.eta * c2.lambda);
    CHECK(static_cast<double>(*t2) >= t_ref * (1.0 - 5.0 * c2.eta));
    CHECK(static_cast<double>(*t2) <= t_ref * (1.0 + 5.0 * c2.eta));
  }
}

TEST_CASE("necessity_check: the dichotomy in all three configurations") {
  RecursionConfig cfg;
  cfg.eta = 1e-3;
  cfg.lambda = 1.0;
  cfg.c1 = 0.5;
  cfg.policy = RemainderPolicy::max_positive;
  cfg.horizon = 10000;

  const NecessityVerdict equal = necessity_check(500.0, 500.0, cfg);
  CHECK(equal.dichotomy_holds);
  CHECK(equal.max_v <= 500.0);

  for (RemainderPolicy policy : {RemainderPolicy::zero, RemainderPolicy::max_positive,
                                 RemainderPolicy::max_negative, RemainderPolicy::random_sign}) {
    RecursionConfig c2 = cfg;
    c2.policy = policy;
    const NecessityVerdict below = necessity_check(300.0, 500.0, c2);
    CHECK(below.dichotomy_holds);
    CHECK(below.max_v <= 500.0);
  }

  const NecessityVerdict above = necessity_check(2000.0, 500.0, cfg);
  CHECK(above.dichotomy_holds);
  REQUIRE(above.crossing.has_value());
  CHECK(*above.crossing > 0);
  const double t_ref = std::log(2000.0 / 500.0) / (2.0 * cfg.eta * cfg.lambda);
  CHECK(static_cast<double>(*above.crossing) >= t_ref * (1.0 - 5.0 * cfg.eta));
  CHECK(static_cast<double>(*above.crossing) <= t_ref * (1.0 + 5.0 * cfg.eta));
}

TEST_CASE("simulate_kosson: fixed point matches the affine closed form to 1e-12") {
  const KossonSim sim = simulate_kosson(100.0, 1e-3, 1.0, 1000.0, 200000);
  const double exact = 1e-6 * 1000.0 / (2e-3 - 1e-6);
  CHECK(sim.fixed_point_exact == doctest::Approx(exact).epsilon(1e-12));
  CHECK(std::abs(sim.fixed_point_exact - 0.500250125062531) < 1e-12);
  CHECK(std::abs(sim.fixed_point_empirical - exact) < 1e-12);
  CHECK(sim.fixed_point_approx == doctest::Approx(0.5).epsilon(1e-15));
  // approximation error is O(eta*lambda) relative
  CHECK(std::abs(sim.fixed_point_approx - exact) / exact < 2.0 * 1e-3);
}

TEST_CASE("simulate_kosson: doubling lambda halves the fixed point up to O(eta*lambda)") {
  const KossonSim a = simulate_kosson(10.0, 1e-3, 1.0, 500.0, 100000);
  const KossonSim b = simulate_kosson(10.0, 1e-3, 2.0, 500.0, 100000);
  CHECK(std::abs(b.fixed_point_empirical / a.fixed_point_empirical - 0.5) < 5e-3);
}

TEST_CASE("simulate_kosson: fit_kosson recovers the asymptote from the simulated series") {
  const KossonSim sim = simulate_kosson(100.0, 1e-3, 1.0, 1000.0, 6000);
  TrajectoryLog log;
  log.eta = 1e-3;
  log.lambda = 1.0;
  log.log_every = 20;
  for (std::size_t t = 0; t < sim.v.size(); t += 20) {
    TrajRow r;
    r.step = static_cast<long>(t);
    r.v = sim.v[t];
    r.train_acc = 1.0;
    r.val_acc = 1.0;
    log.rows.push_back(r);
  }
  const KossonFit fit = fit_kosson(log, 0, static_cast<long>(sim.v.size()) - 1);
  CHECK(std::abs(fit.v_inf - sim.fixed_point_exact) / sim.fixed_point_exact < 5e-3);
}

TEST_CASE("rate_preservation_check: D equals V when theta_post is zero") {
  std::vector<Eigen::VectorXd> thetas;
  Eigen::VectorXd u = Eigen::VectorXd::Ones(4);
  for (int t = 0; t < 50; ++t) thetas.push_back(std::pow(0.999, t) * u);
  const RateGapReport report =
      rate_preservation_check(thetas, Eigen::VectorXd::Zero(4), 1e-3, 1.0);
  CHECK(report.max_gap == 0.0);
  CHECK(report.fitted_k == 0.0);
}

TEST_CASE("rate_preservation_check: radial decay keeps the gap within K*eta*lambda*eps") {
  Eigen::VectorXd u = Eigen::VectorXd::Ones(8).normalized();
  double prev_fitted = 0.0;
  std::vector<double> fitted_by_eps;
  for (double eps0 : {0.2, 0.1, 0.05}) {
    std::vector<Eigen::VectorXd> thetas;
    const double c_inf = eps0;  // |theta_post| relative to |theta_0| = 1
    for (int t = 0; t <= 3000; ++t) {
      const double c = c_inf + (1.0 - c_inf) * std::pow(1.0 - 1e-3, t);
      thetas.push_back(c * u);
    }
    const Eigen::VectorXd theta_post = c_inf * u;
    const RateGapReport report = rate_preservation_check(thetas, theta_post, 1e-3, 1.0);
    CHECK(report.max_eps <= 1.0);
    CHECK(report.fitted_k <= 10.0);
    fitted_by_eps.push_back(report.max_gap);
    (void)prev_fitted;
  }
  // gap decreases monotonically as eps -> 0
  CHECK(fitted_by_eps[1] < fitted_by_eps[0]);
  CHECK(fitted_by_eps[2] < fitted_by_eps[1]);
}

TEST_CASE("recursion config validation") {
  RecursionConfig bad;
  bad.eta = 2.0;
  bad.lambda = 1.0;
  CHECK_THROWS_AS(simulate_contraction(bad), std::invalid_argument);
  RecursionConfig c1bad;
  c1bad.c1 = 1.0;
  CHECK_THROWS_AS(simulate_contraction(c1bad), std::invalid_argument);
}
