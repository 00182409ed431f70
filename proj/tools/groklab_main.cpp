#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "groklab/campaign.hpp"
#include "groklab/io.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& out_dir, int jobs) {
  const groklab::CampaignConfig config = groklab::load_campaign(config_path);
  const auto statuses = groklab::run_campaign(config, out_dir, jobs);
  int done = 0, skipped = 0, failed = 0;
  for (const auto& st : statuses) {
    switch (st.state) {
      case groklab::CampaignRunStatus::State::done:
        ++done;
        break;
      case groklab::CampaignRunStatus::State::skipped:
        ++skipped;
        break;
      case groklab::CampaignRunStatus::State::failed:
        ++failed;
        std::fprintf(stderr, "[failed] %s seed %llu: %s\n", st.cell_id.c_str(),
                     static_cast<unsigned long long>(st.seed), st.error.c_str());
        break;
    }
  }
  std::printf("campaign %s: %d run, %d skipped, %d failed (out: %s)\n", config.campaign_id.c_str(),
              done, skipped, failed, out_dir.c_str());
  return failed == 0 ? 0 : 1;
}

int cmd_analyze(const std::string& out_dir, const std::string& calibration_cell) {
  groklab::AnalyzeOptions options;
  options.calibration_cell_id = calibration_cell;
  const groklab::AnalyzeResult result = groklab::analyze_dir(out_dir, options);
  std::printf("analyzed %d runs (%d excluded); reports:\n", result.n_runs, result.n_excluded);
  for (const std::string& f : result.report_files) std::printf("  %s/reports/%s\n", out_dir.c_str(), f);
  return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir) {
  groklab::Json grid_json;
  if (config_path.empty()) {
    grid_json["schema"] = groklab::kSimGridSchema;
  } else {
    grid_json = groklab::read_json_file(config_path);
  }
  const groklab::SimGrid grid = groklab::sim_grid_from_json(grid_json);
  const groklab::SimGridReport report = groklab::simulate_grid(grid);
  std::filesystem::create_directories(out_dir + "/reports");
  groklab::write_json_file(out_dir + "/reports/bound_verification.json", report.report);
  std::printf("bound verification: fitted_K=%.4g all_crossed=%d spread(c1=0)=%.4g\n",
              report.fitted_k, report.all_bounds_hold ? 1 : 0, report.inverse_scaling_spread_c1_0);
  return report.all_bounds_hold ? 0 : 1;
}

int cmd_verify(const std::string& out_dir, const std::string& claims_path, const std::string& scope) {
  const groklab::VerifyResult result =
      groklab::verify_claims(out_dir + "/reports", claims_path, scope);
  for (const auto& o : result.outcomes) {
    const char* tag = o.state == groklab::ClaimOutcome::State::pass ? "PASS"
                      : o.state == groklab::ClaimOutcome::State::fail ? "FAIL"
                                                                      : "SKIP";
    if (o.state == groklab::ClaimOutcome::State::pass)
      std::printf("[%s] %-40s value=%.6g target=%.6g\n", tag, o.claim.id.c_str(), o.value,
                  o.claim.target);
    else
      std::printf("[%s] %-40s %s\n", tag, o.claim.id.c_str(), o.detail.c_str());
  }
  std::printf("verify: %d pass, %d fail, %d skipped\n", result.n_pass, result.n_fail,
              result.n_skipped);
  if (result.n_pass + result.n_fail == 0)
    std::printf("warning: no claims evaluated at this scope\n");
  return result.ok() ? 0 : 1;
}

int cmd_emit_figures(const std::string& out_dir) {
  const auto files = groklab::emit_figures(out_dir);
  for (const std::string& f : files) std::printf("  %s/figures/%s\n", out_dir.c_str(), f);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"groklab: grokking-delay measurement, prediction, and verification"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "campaign_out", claims_path, scope = "desk";
  std::string calibration_cell;
  int jobs = 0;

  CLI::App* run = app.add_subcommand("run", "execute a campaign of training runs");
  run->add_option("--config", config_path, "campaign config (JSON)")->required();
  run->add_option("--out", out_dir, "output directory for run artifacts");
  run->add_option("--jobs", jobs, "parallel runs (overrides config)");

  CLI::App* analyze = app.add_subcommand("analyze", "build reports from run artifacts");
  analyze->add_option("--out", out_dir, "directory holding run artifacts")->required();
  analyze->add_option("--calibration-cell", calibration_cell,
                      "cell id used to calibrate (kappa, V*)");

  CLI::App* simulate = app.add_subcommand("simulate", "contraction-recursion bound verification");
  simulate->add_option("--config", config_path, "grid config (JSON); default grid when omitted");
  simulate->add_option("--out", out_dir, "directory to place reports under");

  CLI::App* verify = app.add_subcommand("verify", "check emitted reports against a claims file");
  verify->add_option("--out", out_dir, "directory holding reports")->required();
  verify->add_option("--claims", claims_path, "claims file (JSON)")->required();
  verify->add_option("--scope", scope, "desk or full")->check(CLI::IsMember({"desk", "full"}));

  CLI::App* figures = app.add_subcommand("emit-figures", "columnar figure data from run artifacts");
  figures->add_option("--out", out_dir, "directory holding run artifacts")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir, jobs);
    if (analyze->parsed()) return cmd_analyze(out_dir, calibration_cell);
    if (simulate->parsed()) return cmd_simulate(config_path, out_dir);
    if (verify->parsed()) return cmd_verify(out_dir, claims_path, scope);
    if (figures->parsed()) return cmd_emit_figures(out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
