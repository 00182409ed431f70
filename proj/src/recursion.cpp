#include "groklab/recursion.hpp"

#include <cmath>
#include <stdexcept>

#include "groklab/rng.hpp"

namespace groklab {

const char* remainder_policy_name(RemainderPolicy p) {
  switch (p) {
    case RemainderPolicy::zero: return "zero";
    case RemainderPolicy::max_positive: return "max_positive";
    case RemainderPolicy::max_negative: return "max_negative";
    case RemainderPolicy::random_sign: return "random_sign";
  }
  return "?";
}

std::optional<RemainderPolicy> remainder_policy_from_name(const std::string& name) {
  for (RemainderPolicy p : {RemainderPolicy::zero, RemainderPolicy::max_positive,
                            RemainderPolicy::max_negative, RemainderPolicy::random_sign})
    if (name == remainder_policy_name(p)) return p;
  return std::nullopt;
}

void RecursionConfig::validate() const {
  if (v0 <= 0.0) throw std::invalid_argument("RecursionConfig: V0 must be positive");
  if (eta <= 0.0 || lambda <= 0.0) throw std::invalid_argument("RecursionConfig: eta, lambda must be positive");
  if (eta * lambda >= 1.0) throw std::invalid_argument("RecursionConfig: requires eta*lambda < 1");
  if (c1 < 0.0 || c1 >= 1.0) throw std::invalid_argument("RecursionConfig: c1 in [0, 1)");
  if (horizon < 1) throw std::invalid_argument("RecursionConfig: horizon >= 1");
}

double RecursionConfig::remainder_bound_factor() const {
  const double el = eta * lambda;
  return 2.0 * c1 * eta * el + c1 * c1 * eta * eta * el * el;
}

std::vector<double> simulate_contraction(const RecursionConfig& config) {
  config.validate();
  const double contraction = (1.0 - config.eta * config.lambda) * (1.0 - config.eta * config.lambda);
  const double bound = config.remainder_bound_factor();
  Rng rng = Rng(config.seed).split("remainder");

  std::vector<double> v(static_cast<std::size_t>(config.horizon) + 1);
  v[0] = config.v0;
  for (long t = 0; t < config.horizon; ++t) {
    double sign = 0.0;
    switch (config.policy) {
      case RemainderPolicy::zero: sign = 0.0; break;
      case RemainderPolicy::max_positive: sign = 1.0; break;
      case RemainderPolicy::max_negative: sign = -1.0; break;
      case RemainderPolicy::random_sign: sign = rng.uniform() < 0.5 ? -1.0 : 1.0; break;
    }
    const std::size_t i = static_cast<std::size_t>(t);
    v[i + 1] = contraction * v[i] + sign * bound * v[i];
  }
  return v;
}

std::optional<long> crossing_time(const std::vector<double>& series, double v_target) {
  for (std::size_t i = 0; i < series.size(); ++i)
    if (series[i] <= v_target) return static_cast<long>(i);
  return std::nullopt;
}

NecessityVerdict necessity_check(double v_mem, double v_post, const RecursionConfig& config) {
  NecessityVerdict verdict;
  if (v_mem <= v_post) {
    // Start at V_mem (<= V_post) and certify the contraction map never
    // climbs back above V_post.
    RecursionConfig from_mem = config;
    from_mem.v0 = v_mem;
    const std::vector<double> v = simulate_contraction(from_mem);
    double max_v = 0.0;
    for (double x : v) max_v = std::max(max_v, x);
    verdict.max_v = max_v;
    verdict.dichotomy_holds = max_v <= v_post;
  } else {
    RecursionConfig from_mem = config;
    from_mem.v0 = v_mem;
    const std::vector<double> v = simulate_contraction(from_mem);
    verdict.max_v = v.front();
    verdict.crossing = crossing_time(v, v_post);
    verdict.dichotomy_holds = verdict.crossing.has_value() && *verdict.crossing > 0;
  }
  return verdict;
}

KossonSim simulate_kosson(double v0, double eta, double lambda, double c_dim, long horizon) {
  if (c_dim <= 0.0) throw std::invalid_argument("simulate_kosson: C must be positive");
  if (eta <= 0.0 || lambda <= 0.0 || eta * lambda >= 1.0)
    throw std::invalid_argument("simulate_kosson: requires 0 < eta*lambda < 1");
  KossonSim sim;
  const double contraction = (1.0 - eta * lambda) * (1.0 - eta * lambda);
  const double drive = eta * eta * c_dim;
  sim.v.resize(static_cast<std::size_t>(horizon) + 1);
  sim.v[0] = v0;
  for (long t = 0; t < horizon; ++t) {
    const std::size_t i = static_cast<std::size_t>(t);
    sim.v[i + 1] = contraction * sim.v[i] + drive;
    if (sim.v[i + 1] == sim.v[i]) {  // converged to the fixed point exactly
      sim.v.resize(i + 2);
      break;
    }
  }
  sim.fixed_point_empirical = sim.v.back();
  const double el = eta * lambda;
  sim.fixed_point_exact = drive / (el * (2.0 - el));  // 2*el - el^2 without cancellation
  sim.fixed_point_approx = eta * c_dim / (2.0 * lambda);
  return sim;
}

RateGapReport rate_preservation_check(const std::vector<Eigen::VectorXd>& thetas,
                                      const Eigen::VectorXd& theta_post, double eta, double lambda) {
  if (thetas.size() < 2) throw std::invalid_argument("rate_preservation_check: need >= 2 snapshots");
  RateGapReport report;
  const double post_norm = theta_post.norm();
  double prev_v = thetas[0].squaredNorm();
  double prev_d = (thetas[0] - theta_post).squaredNorm();
  for (std::size_t i = 1; i < thetas.size(); ++i) {
    const double v = thetas[i].squaredNorm();
    const double d = (thetas[i] - theta_post).squaredNorm();
    const double n = std::sqrt(prev_v);
    if (n <= post_norm) throw std::invalid_argument("rate_preservation_check: requires |theta_t| > |theta_post|");
    const double eps = post_norm / n;
    const double gap = std::abs((std::log(v) - std::log(prev_v)) - (std::log(d) - std::log(prev_d)));
    report.max_gap = std::max(report.max_gap, gap);
    report.max_eps = std::max(report.max_eps, eps);
    if (eps > 0.0) report.fitted_k = std::max(report.fitted_k, gap / (eta * lambda * eps));
    prev_v = v;
    prev_d = d;
  }
  return report;
}

}  // namespace groklab
