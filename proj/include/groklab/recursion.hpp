#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace groklab {

enum class RemainderPolicy { zero, max_positive, max_negative, random_sign };

const char* remainder_policy_name(RemainderPolicy p);
std::optional<RemainderPolicy> remainder_policy_from_name(const std::string& name);

// V_{t+1} = (1 - eta*lambda)^2 V_t + R_t with the remainder driven to the
// edge of its bound |R_t| <= (2 c1 eta^2 lambda + c1^2 eta^4 lambda^2) V_t.
struct RecursionConfig {
  double v0 = 1.0;
  double eta = 1e-3;
  double lambda = 1.0;
  double c1 = 0.0;  // in [0, 1)
  RemainderPolicy policy = RemainderPolicy::zero;
  long horizon = 1000;
  std::uint64_t seed = 0;  // for random_sign

  void validate() const;
  double remainder_bound_factor() const;  // 2 c1 eta^2 lambda + c1^2 eta^4 lambda^2
};

std::vector<double> simulate_contraction(const RecursionConfig& config);

// First index with V <= target; nullopt if never reached.
std::optional<long> crossing_time(const std::vector<double>& series, double v_target);

struct NecessityVerdict {
  bool dichotomy_holds = false;  // starting at or below V_post, V never exceeds it
  double max_v = 0.0;
  std::optional<long> crossing;  // positive crossing time when V_mem > V_post
};

NecessityVerdict necessity_check(double v_mem, double v_post, const RecursionConfig& config);

struct KossonSim {
  std::vector<double> v;
  double fixed_point_empirical = 0.0;
  double fixed_point_exact = 0.0;   // eta^2 C / (1 - (1 - eta*lambda)^2)
  double fixed_point_approx = 0.0;  // eta C / (2 lambda)
};

// Expected-value recursion V_{t+1} = (1 - eta*lambda)^2 V_t + eta^2 C.
KossonSim simulate_kosson(double v0, double eta, double lambda, double c_dim, long horizon);

struct RateGapReport {
  double max_gap = 0.0;        // max | dlog V - dlog D | per step
  double max_eps = 0.0;        // max |theta_post| / |theta_t|
  double fitted_k = 0.0;       // smallest K with gap_t <= K * eta*lambda * eps_t everywhere
};

// Compares discrete log-slopes of V_t = |theta_t|^2 and D_t = |theta_t - theta_post|^2.
RateGapReport rate_preservation_check(const std::vector<Eigen::VectorXd>& thetas,
                                      const Eigen::VectorXd& theta_post, double eta, double lambda);

}  // namespace groklab
