#pragma once

#include <optional>
#include <string>
#include <vector>

#include "groklab/analysis.hpp"
#include "groklab/io.hpp"
#include "groklab/recursion.hpp"

namespace groklab {

struct CampaignRunStatus {
  std::string run_id;
  std::string cell_id;
  std::uint64_t seed = 0;
  enum class State { done, skipped, failed } state = State::done;
  std::string error;
};

// Executes all runs of the campaign into out_dir, skipping runs whose
// artifacts already exist (idempotent, resumable). Runs are independent;
// jobs_override > 0 replaces the config's parallelism degree.
std::vector<CampaignRunStatus> run_campaign(const CampaignConfig& config,
                                            const std::string& out_dir, int jobs_override = 0);

struct AnalyzeOptions {
  std::string calibration_cell_id;  // empty: first cell with >= 3 qualifying runs
};

struct AnalyzeResult {
  int n_runs = 0;
  int n_excluded = 0;
  std::vector<std::string> report_files;
};

// Reads every summary (+ trajectory) under runs_dir and writes the report
// set into <runs_dir>/reports: cell statistics, tier report, calibration,
// overshoot report, ratio stability, audit summary.
AnalyzeResult analyze_dir(const std::string& runs_dir, const AnalyzeOptions& options = {});

struct ClaimOutcome {
  Claim claim;
  enum class State { pass, fail, skipped } state = State::pass;
  double value = 0.0;
  std::string detail;
};

struct VerifyResult {
  std::vector<ClaimOutcome> outcomes;
  int n_pass = 0;
  int n_fail = 0;
  int n_skipped = 0;
  bool ok() const { return n_fail == 0; }
};

VerifyResult verify_claims(const std::string& reports_dir, const std::string& claims_path,
                           const std::string& scope);

// Grid front-end to the contraction recursion; emits bound_verification.json.
struct SimGrid {
  std::vector<double> etas;
  std::vector<double> lambdas;
  std::vector<double> c1s;
  std::vector<RemainderPolicy> policies;
  double v0 = 100.0;
  double log_ratio = 4.0;  // ln(V0 / V_target)
};

SimGrid sim_grid_from_json(const Json& j);

struct SimGridReport {
  Json report;
  bool all_bounds_hold = false;
  double fitted_k = 0.0;
  double inverse_scaling_spread_c1_0 = 0.0;
};

SimGridReport simulate_grid(const SimGrid& grid);

// Columnar figure data: trajectory collapse, kappa tables, phase plane,
// overshoot scatter.
std::vector<std::string> emit_figures(const std::string& runs_dir);

}  // namespace groklab
