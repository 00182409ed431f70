#include "groklab/campaign.hpp"

#include "groklab/core_math.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

namespace groklab {

namespace fs = std::filesystem;

namespace {

std::string run_basename(const RunConfig& config) {
  return config.cell_id + "_seed" + std::to_string(config.seed);
}

Json opt_to_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

struct LoadedRun {
  RunSummary summary;
  TrajectoryLog log;
  bool has_log = false;
};

std::vector<LoadedRun> load_runs(const std::string& runs_dir, std::vector<std::string>& notes) {
  std::vector<fs::path> summary_paths;
  for (const auto& entry : fs::directory_iterator(runs_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 13 && name.substr(name.size() - 13) == ".summary.json")
      summary_paths.push_back(entry.path());
  }
  std::sort(summary_paths.begin(), summary_paths.end());

  std::vector<LoadedRun> runs;
  for (const fs::path& sp : summary_paths) {
    LoadedRun run;
    try {
      run.summary = read_summary(sp.string());
    } catch (const std::exception& e) {
      notes.push_back("unreadable summary " + sp.filename().string() + ": " + e.what());
      continue;
    }
    std::string traj = sp.string();
    traj.replace(traj.size() - 13, 13, ".traj");
    try {
      run.log = read_trajectory(traj);
      run.has_log = true;
    } catch (const std::exception& e) {
      notes.push_back("run excluded, trajectory unreadable: " + run.summary.run_id + " (" +
                      e.what() + ")");
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

Json cell_summary_to_json(const CellSummary& c) {
  Json j;
  j["cell_id"] = c.cell_id;
  j["arch"] = c.arch;
  j["task"] = c.task;
  j["p"] = c.p;
  j["eta"] = c.eta;
  j["lambda"] = c.lambda;
  j["n_runs"] = c.n_runs;
  j["n_grokked"] = c.n_grokked;
  j["n_kappa_admitted"] = c.n_kappa_admitted;
  j["kappa_median"] = opt_to_json(c.kappa_median);
  j["kappa_iqr_lo"] = c.kappa_iqr ? Json(c.kappa_iqr->q1) : Json(nullptr);
  j["kappa_iqr_hi"] = c.kappa_iqr ? Json(c.kappa_iqr->q3) : Json(nullptr);
  j["kappa_cv"] = opt_to_json(c.kappa_cv);
  j["kappa_kos_median"] = opt_to_json(c.kappa_kos_median);
  j["f_window_median"] = opt_to_json(c.f_window_median);
  j["r2_median"] = opt_to_json(c.r2_median);
  j["v_star_median"] = opt_to_json(c.v_star_median);
  j["alpha_star_median_deg"] = opt_to_json(c.alpha_star_median_deg);
  j["v_mem_median"] = opt_to_json(c.v_mem_median);
  j["v_post_median"] = opt_to_json(c.v_post_median);
  j["ratio_v_star_over_v_mem"] = opt_to_json(c.ratio_v_star_over_v_mem);
  j["tau_ratio_median"] = opt_to_json(c.tau_ratio_median);
  j["delay_median"] = opt_to_json(c.delay_median);
  return j;
}

Json power_law_to_json(const PowerLawFit& f) {
  Json j;
  j["amplitude"] = f.amplitude;
  j["exponent"] = f.exponent;
  j["r_squared"] = f.r_squared;
  j["exponent_ci_lo"] = f.exponent_ci_lo;
  j["exponent_ci_hi"] = f.exponent_ci_hi;
  j["n_bootstrap"] = f.n_bootstrap;
  return j;
}

bool same_cell_family(const RunConfig& a, const RunConfig& b) {
  // Same task family, architecture, and optimizer point; used to pair
  // intervention cells with their baseline and to collect p-sweeps.
  if (a.task.kind != b.task.kind) return false;
  if (a.task.kind == TaskConfig::Kind::modular && a.task.op != b.task.op) return false;
  if (a.arch.arch != b.arch.arch || a.arch.embed_dim != b.arch.embed_dim ||
      a.arch.ff_dim != b.arch.ff_dim || a.arch.heads != b.arch.heads)
    return false;
  return a.optim.kind == b.optim.kind && a.optim.eta == b.optim.eta &&
         a.optim.lambda == b.optim.lambda;
}

}  // namespace

std::vector<CampaignRunStatus> run_campaign(const CampaignConfig& config,
                                            const std::string& out_dir, int jobs_override) {
  fs::create_directories(out_dir);

  struct Work {
    RunConfig config;
    std::string base;
  };
  std::vector<Work> work;
  for (const CampaignCell& cell : config.cells) {
    for (std::uint64_t seed : cell.seeds) {
      RunConfig rc = cell.base;
      rc.seed = seed;
      work.push_back({rc, run_basename(rc)});
    }
  }

  std::vector<CampaignRunStatus> statuses(work.size());
  std::atomic<std::size_t> next{0};
  const int jobs = std::max(1, jobs_override > 0 ? jobs_override : config.jobs);

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= work.size()) return;
      const Work& w = work[i];
      CampaignRunStatus& st = statuses[i];
      st.cell_id = w.config.cell_id;
      st.seed = w.config.seed;
      st.run_id = run_id_of(w.config);
      const std::string summary_path = out_dir + "/" + w.base + ".summary.json";
      const std::string traj_path = out_dir + "/" + w.base + ".traj";
      if (fs::exists(summary_path) && fs::exists(traj_path)) {
        st.state = CampaignRunStatus::State::skipped;
        continue;
      }
      try {
        const RunResult result = run_training(w.config);
        write_trajectory(traj_path, result.log);
        write_summary(summary_path, result.summary);
        st.state = CampaignRunStatus::State::done;
      } catch (const std::exception& e) {
        st.state = CampaignRunStatus::State::failed;
        st.error = e.what();
      }
    }
  };

  std::vector<std::thread> threads;
  for (int i = 0; i < jobs; ++i) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  return statuses;
}

AnalyzeResult analyze_dir(const std::string& runs_dir, const AnalyzeOptions& options) {
  std::vector<std::string> notes;
  const std::vector<LoadedRun> loaded = load_runs(runs_dir, notes);
  if (loaded.empty()) throw std::runtime_error("analyze: no summaries under " + runs_dir);

  std::vector<RunRecord> records;
  Json run_index = Json::array();
  int n_excluded = 0;
  for (const LoadedRun& run : loaded) {
    Json entry;
    entry["run_id"] = run.summary.run_id;
    entry["cell_id"] = run.summary.config.cell_id;
    entry["seed"] = run.summary.config.seed;
    entry["has_trajectory"] = run.has_log;
    entry["included"] = run.has_log;
    run_index.push_back(entry);
    if (!run.has_log) {
      ++n_excluded;
      continue;
    }
    records.push_back(analyze_run(run.summary, run.log));
  }

  const std::string reports_dir = runs_dir + "/reports";
  fs::create_directories(reports_dir);
  AnalyzeResult result;
  result.n_runs = static_cast<int>(loaded.size());
  result.n_excluded = n_excluded;

  // --- cell statistics ------------------------------------------------------
  const CampaignStats stats = cell_statistics(records);
  {
    Json j;
    j["schema"] = "groklab.cell_stats.v1";
    Json cells = Json::array();
    for (const CellSummary& c : stats.cells) cells.push_back(cell_summary_to_json(c));
    j["cells"] = cells;
    j["pooled_kappa_median"] = opt_to_json(stats.pooled_kappa_median);
    j["pooled_kappa_cv"] = opt_to_json(stats.pooled_kappa_cv);
    j["within_cell_median_cv"] = opt_to_json(stats.within_cell_median_cv);
    write_json_file(reports_dir + "/cell_statistics.json", j);
    result.report_files.push_back("cell_statistics.json");
  }

  // --- tier report ----------------------------------------------------------
  std::string calib = options.calibration_cell_id;
  if (calib.empty()) {
    for (const CellSummary& c : stats.cells) {
      if (c.n_kappa_admitted >= 3) {
        calib = c.cell_id;
        break;
      }
    }
  }
  std::optional<TierReport> tier;
  if (!calib.empty()) {
    try {
      tier = three_tier_report(records, calib);
    } catch (const std::exception& e) {
      notes.push_back(std::string("tier report unavailable: ") + e.what());
    }
  } else {
    notes.push_back("tier report unavailable: no cell with >= 3 qualifying runs");
  }
  {
    Json j;
    j["schema"] = "groklab.tier_report.v1";
    if (tier) {
      j["calibration_cell_id"] = tier->calibration_cell_id;
      j["kappa_train"] = tier->kappa_train;
      j["v_star_train"] = tier->v_star_train;
      j["n_calibration_runs"] = tier->n_calibration_runs;
      Json cells = Json::array();
      for (const TierCellRow& r : tier->cells) {
        Json row;
        row["cell_id"] = r.cell_id;
        row["tier"] = r.tier;
        row["n"] = r.n;
        row["median_t_grok"] = r.median_t_grok;
        row["mape_a"] = opt_to_json(r.mape_a);
        row["mape_b"] = opt_to_json(r.mape_b);
        cells.push_back(row);
      }
      j["cells"] = cells;
      auto pool_json = [](const std::optional<TierPool>& p) -> Json {
        if (!p) return nullptr;
        Json pj;
        pj["n"] = p->n;
        pj["mape_a"] = opt_to_json(p->mape_a);
        pj["mape_b"] = opt_to_json(p->mape_b);
        pj["delay_range"] = p->delay_range;
        return pj;
      };
      j["tier1"] = pool_json(tier->tier1);
      j["tier2"] = pool_json(tier->tier2);
      j["tier3"] = pool_json(tier->tier3);
      Json tnotes = Json::array();
      for (const std::string& n : tier->notes) tnotes.push_back(n);
      j["notes"] = tnotes;
    } else {
      j["calibration_cell_id"] = nullptr;
    }
    write_json_file(reports_dir + "/tier_report.json", j);
    result.report_files.push_back("tier_report.json");
  }

  // --- calibration records ---------------------------------------------------
  {
    Json j;
    j["schema"] = "groklab.calibration.v1";
    j["loocv"] = nullptr;
    if (!calib.empty()) {
      std::vector<RunRecord> calib_runs;
      for (const RunRecord& r : records)
        if (r.summary.config.cell_id == calib) calib_runs.push_back(r);
      try {
        const LoocvResult loocv = loocv_calibration(calib_runs);
        Json lj;
        lj["v_star_variation_pct"] = loocv.v_star_variation_pct;
        lj["kappa_variation_pct"] = loocv.kappa_variation_pct;
        lj["folds"] = loocv.folds;
        j["loocv"] = lj;
      } catch (const std::exception& e) {
        notes.push_back(std::string("loocv unavailable: ") + e.what());
      }
    }

    // C-form calibration across the p-sweep of the calibration cell family.
    j["c_calibration"] = nullptr;
    j["alpha_star_p_fit"] = nullptr;
    j["v_star_p_fit_power"] = nullptr;
    j["v_star_p_fit_linear"] = nullptr;
    const RunRecord* calib_rec = nullptr;
    for (const RunRecord& r : records)
      if (r.summary.config.cell_id == calib) {
        calib_rec = &r;
        break;
      }
    if (calib_rec && calib_rec->summary.config.task.kind == TaskConfig::Kind::modular) {
      std::vector<CCalibrationRow> rows;
      std::vector<double> ps, alphas, vstars;
      Json row_json = Json::array();
      for (const CellSummary& c : stats.cells) {
        const RunRecord* rep = nullptr;
        for (const RunRecord& r : records)
          if (r.summary.config.cell_id == c.cell_id) {
            rep = &r;
            break;
          }
        if (!rep || !same_cell_family(rep->summary.config, calib_rec->summary.config)) continue;
        if (!c.alpha_star_median_deg || !c.v_mem_median || !c.v_star_median) continue;
        CCalibrationRow row;
        row.p = c.p;
        row.sqrt_v_t_mem = std::sqrt(*c.v_mem_median);
        row.alpha_star_obs_deg = *c.alpha_star_median_deg;
        rows.push_back(row);
        ps.push_back(static_cast<double>(c.p));
        alphas.push_back(*c.alpha_star_median_deg);
        vstars.push_back(*c.v_star_median);
        Json rj;
        rj["cell_id"] = c.cell_id;
        rj["p"] = c.p;
        rj["sqrt_v_t_mem"] = row.sqrt_v_t_mem;
        rj["alpha_star_obs_deg"] = row.alpha_star_obs_deg;
        row_json.push_back(rj);
      }
      if (!rows.empty()) {
        const CCalibration cc = calibrate_C(rows);
        Json cj;
        for (std::size_t i = 0; i < cc.c_per_cell.size(); ++i) row_json[i]["c"] = cc.c_per_cell[i];
        cj["rows"] = row_json;
        cj["mean"] = cc.mean;
        cj["stddev"] = cc.stddev;
        cj["cv"] = cc.cv;
        j["c_calibration"] = cj;
      }
      if (ps.size() >= 3) {
        try {
          j["alpha_star_p_fit"] = power_law_to_json(power_law_fit(ps, alphas, 2000));
          j["v_star_p_fit_power"] = power_law_to_json(power_law_fit(ps, vstars, 2000));
          const std::vector<double> px = ps;
          const LineFit lin = least_squares_line(px, vstars);
          Json lj;
          lj["slope"] = lin.slope;
          lj["intercept"] = lin.intercept;
          lj["r_squared"] = lin.r_squared;
          j["v_star_p_fit_linear"] = lj;
        } catch (const std::exception& e) {
          notes.push_back(std::string("p-scaling fits unavailable: ") + e.what());
        }
      }
    }
    write_json_file(reports_dir + "/calibration.json", j);
    result.report_files.push_back("calibration.json");
  }

  // --- overshoot report -------------------------------------------------------
  {
    Json j;
    j["schema"] = "groklab.overshoot.v1";
    Json runs = Json::array();
    std::vector<std::pair<double, double>> law_points;
    for (const LoadedRun& run : loaded) {
      if (!run.has_log || !run.summary.t_grok_95) continue;
      try {
        const OvershootMetrics m = overshoot_metrics(run.log, run.summary);
        Json rj;
        rj["run_id"] = run.summary.run_id;
        rj["cell_id"] = run.summary.config.cell_id;
        rj["v_at_t95"] = m.v_at_t95;
        rj["v_min_post"] = m.v_min_post;
        rj["v_max_post"] = m.v_max_post;
        rj["rho_drop"] = m.rho_drop;
        rj["extra_delay_ratio"] = opt_to_json(m.extra_delay_ratio);
        runs.push_back(rj);
        if (m.extra_delay_ratio && *m.extra_delay_ratio > 0.0)
          law_points.emplace_back(m.rho_drop, *m.extra_delay_ratio);
      } catch (const std::exception&) {
      }
    }
    j["runs"] = runs;
    j["law"] = nullptr;
    if (law_points.size() >= 5) {
      try {
        j["law"] = power_law_to_json(fit_overshoot_law(law_points, 1000));
      } catch (const std::exception& e) {
        notes.push_back(std::string("overshoot law fit unavailable: ") + e.what());
      }
    }
    write_json_file(reports_dir + "/overshoot_report.json", j);
    result.report_files.push_back("overshoot_report.json");
  }

  // --- ratio stability ---------------------------------------------------------
  {
    Json j;
    j["schema"] = "groklab.ratio_stability.v1";
    Json rows = Json::array();
    for (const RatioStability& rs : ratio_stability(stats.cells)) {
      Json rj;
      rj["arch"] = rs.arch;
      rj["n_cells"] = rs.n_cells;
      rj["mean"] = rs.mean;
      rj["stddev"] = rs.stddev;
      rj["cv"] = opt_to_json(rs.cv);
      rj["min"] = rs.min;
      rj["max"] = rs.max;
      rows.push_back(rj);
    }
    j["by_arch"] = rows;
    write_json_file(reports_dir + "/ratio_stability.json", j);
    result.report_files.push_back("ratio_stability.json");
  }

  // --- audit summary (claim-ready scalars) --------------------------------------
  {
    Json j;
    j["schema"] = "groklab.audit.v1";
    j["n_runs"] = result.n_runs;
    j["n_excluded"] = result.n_excluded;

    std::map<std::string, std::vector<const RunRecord*>> by_cell;
    for (const RunRecord& r : records) by_cell[r.summary.config.cell_id].push_back(&r);

    // Baseline alpha_star per intervention cell: the intervention-free cell
    // with the same task, architecture, and optimizer point.
    auto baseline_alpha_star = [&](const RunConfig& cfg) -> std::optional<double> {
      for (const CellSummary& c : stats.cells) {
        if (c.cell_id == cfg.cell_id) continue;
        const auto it = by_cell.find(c.cell_id);
        if (it == by_cell.end()) continue;
        const RunConfig& other = it->second.front()->summary.config;
        if (other.intervention != Intervention::none) continue;
        if (!same_cell_family(other, cfg)) continue;
        const bool same_scale = other.task.kind == TaskConfig::Kind::modular
                                    ? other.task.p == cfg.task.p
                                    : (other.task.n == cfg.task.n && other.task.k == cfg.task.k);
        if (same_scale && c.alpha_star_median_deg) return c.alpha_star_median_deg;
      }
      return std::nullopt;
    };

    Json cells;
    for (const auto& [cell_id, runs] : by_cell) {
      Json cj;
      cj["n_runs"] = static_cast<int>(runs.size());
      int n_grokked = 0, n_diverged = 0;
      bool order_ok = true;
      bool zero_delay_all = true;
      std::vector<double> delays, r2s, kappas, t_mems, t_groks, alpha_finals;
      double v_mem_over_v_post_min = std::numeric_limits<double>::infinity();
      double v_post_over_v_mem_min = std::numeric_limits<double>::infinity();
      double f3_rel_std_max = 0.0;
      bool has_f3 = false, has_ratio = false;
      for (const RunRecord* r : runs) {
        const RunSummary& s = r->summary;
        if (s.grokked) ++n_grokked;
        if (s.diverged) ++n_diverged;
        if (s.t_mem && s.t_grok_95 && *s.t_grok_95 < *s.t_mem) order_ok = false;
        if (s.t_grok_95 && s.t_grok_99 && *s.t_grok_99 < *s.t_grok_95) order_ok = false;
        if (s.t_mem && s.t_grok_99) {
          delays.push_back(static_cast<double>(*s.t_grok_99 - *s.t_mem));
          if (*s.t_grok_99 != *s.t_mem) zero_delay_all = false;
        }
        if (r->kappa) {
          r2s.push_back(r->kappa->r_squared);
          if (r->kappa->r_squared > kKappaAdmissionR2) kappas.push_back(r->kappa->kappa_ll);
        }
        if (s.v_mem && s.v_post && *s.v_post > 0.0 && *s.v_mem > 0.0) {
          has_ratio = true;
          v_mem_over_v_post_min = std::min(v_mem_over_v_post_min, *s.v_mem / *s.v_post);
          v_post_over_v_mem_min = std::min(v_post_over_v_mem_min, *s.v_post / *s.v_mem);
        }
        if (s.t_mem) t_mems.push_back(static_cast<double>(*s.t_mem));
        if (s.t_grok_99) t_groks.push_back(static_cast<double>(*s.t_grok_99));
        if (s.alpha_final_deg) alpha_finals.push_back(*s.alpha_final_deg);
        if (s.f3_norm_rel_std) {
          has_f3 = true;
          f3_rel_std_max = std::max(f3_rel_std_max, *s.f3_norm_rel_std);
        }
      }
      cj["n_grokked"] = n_grokked;
      cj["n_diverged"] = n_diverged;
      cj["order_ok"] = order_ok ? 1 : 0;
      cj["zero_delay_all"] = (!delays.empty() && zero_delay_all) ? 1 : 0;
      cj["delay_median"] = delays.empty() ? Json(nullptr) : Json(median_of(delays));
      cj["delay_min"] =
          delays.empty() ? Json(nullptr) : Json(*std::min_element(delays.begin(), delays.end()));
      cj["delay_max"] =
          delays.empty() ? Json(nullptr) : Json(*std::max_element(delays.begin(), delays.end()));
      cj["t_mem_min"] =
          t_mems.empty() ? Json(nullptr) : Json(*std::min_element(t_mems.begin(), t_mems.end()));
      cj["r2_min"] =
          r2s.empty() ? Json(nullptr) : Json(*std::min_element(r2s.begin(), r2s.end()));
      cj["r2_median"] = r2s.empty() ? Json(nullptr) : Json(median_of(r2s));
      cj["kappa_median"] = kappas.empty() ? Json(nullptr) : Json(median_of(kappas));
      cj["v_mem_over_v_post_min"] = has_ratio ? Json(v_mem_over_v_post_min) : Json(nullptr);
      cj["v_post_over_v_mem_min"] = has_ratio ? Json(v_post_over_v_mem_min) : Json(nullptr);
      cj["t_mem_median"] = t_mems.empty() ? Json(nullptr) : Json(median_of(t_mems));
      cj["t_grok99_median"] = t_groks.empty() ? Json(nullptr) : Json(median_of(t_groks));
      cj["alpha_final_max_deg"] = alpha_finals.empty()
                                      ? Json(nullptr)
                                      : Json(*std::max_element(alpha_finals.begin(), alpha_finals.end()));
      cj["f3_norm_rel_std_max"] = has_f3 ? Json(f3_rel_std_max) : Json(nullptr);

      for (const CellSummary& c : stats.cells)
        if (c.cell_id == cell_id) cj["alpha_star_median_deg"] = opt_to_json(c.alpha_star_median_deg);

      const RunConfig& cfg = runs.front()->summary.config;
      if (cfg.intervention != Intervention::none) {
        const std::optional<double> base_alpha = baseline_alpha_star(cfg);
        if (base_alpha && !alpha_finals.empty()) {
          const double amax = *std::max_element(alpha_finals.begin(), alpha_finals.end());
          cj["baseline_alpha_star_deg"] = *base_alpha;
          cj["alpha_final_below_cell_alpha_star"] = amax < *base_alpha ? 1 : 0;
        }
      }
      cells[cell_id] = cj;
    }
    j["cells"] = cells;

    if (tier) {
      j["kappa_train"] = tier->kappa_train;
      j["v_star_train"] = tier->v_star_train;
      j["tier1_mape_b"] = tier->tier1 ? opt_to_json(tier->tier1->mape_b) : Json(nullptr);
      j["tier1_mape_a"] = tier->tier1 ? opt_to_json(tier->tier1->mape_a) : Json(nullptr);
      j["tier3_mape_b"] = tier->tier3 ? opt_to_json(tier->tier3->mape_b) : Json(nullptr);
      if (tier->tier3 && tier->tier3->mape_a && tier->tier3->mape_b)
        j["mape_b_le_mape_a"] = *tier->tier3->mape_b <= *tier->tier3->mape_a ? 1 : 0;
    }
    j["pooled_kappa_median"] = opt_to_json(stats.pooled_kappa_median);
    j["within_cell_median_cv"] = opt_to_json(stats.within_cell_median_cv);

    Json note_json = Json::array();
    for (const std::string& n : notes) note_json.push_back(n);
    j["notes"] = note_json;
    write_json_file(reports_dir + "/audit_summary.json", j);
    result.report_files.push_back("audit_summary.json");
  }

  write_json_file(reports_dir + "/run_index.json",
                  Json{{"schema", "groklab.run_index.v1"}, {"runs", run_index}});
  result.report_files.push_back("run_index.json");
  return result;
}

VerifyResult verify_claims(const std::string& reports_dir, const std::string& claims_path,
                           const std::string& scope) {
  const std::vector<Claim> claims = load_claims(claims_path);
  VerifyResult result;
  std::map<std::string, Json> file_cache;

  for (const Claim& claim : claims) {
    ClaimOutcome outcome;
    outcome.claim = claim;
    if (claim.scope == "full" && scope != "full") {
      outcome.state = ClaimOutcome::State::skipped;
      outcome.detail = "full-scope claim skipped at desk scope";
      result.outcomes.push_back(outcome);
      ++result.n_skipped;
      continue;
    }
    try {
      const std::string path = reports_dir + "/" + claim.file;
      auto it = file_cache.find(path);
      if (it == file_cache.end()) it = file_cache.emplace(path, read_json_file(path)).first;
      const Json& doc = it->second;
      const Json value = doc.at(nlohmann::json_pointer<std::string>(claim.pointer));
      double v = 0.0;
      if (value.is_number())
        v = value.get<double>();
      else if (value.is_boolean())
        v = value.get<bool>() ? 1.0 : 0.0;
      else
        throw std::runtime_error("value at " + claim.pointer + " is not numeric");
      outcome.value = v;
      const double tol = claim.tol_abs + claim.tol_rel * std::abs(claim.target);
      if (std::abs(v - claim.target) <= tol) {
        outcome.state = ClaimOutcome::State::pass;
        ++result.n_pass;
      } else {
        outcome.state = ClaimOutcome::State::fail;
        std::ostringstream os;
        os << "value " << v << " not within " << tol << " of " << claim.target;
        outcome.detail = os.str();
        ++result.n_fail;
      }
    } catch (const std::exception& e) {
      outcome.state = ClaimOutcome::State::fail;
      outcome.detail = std::string("missing key: ") + claim.file + claim.pointer + " (" + e.what() + ")";
      ++result.n_fail;
    }
    result.outcomes.push_back(outcome);
  }
  return result;
}

SimGrid sim_grid_from_json(const Json& j) {
  if (j.value("schema", "") != kSimGridSchema)
    throw std::runtime_error("sim grid: expected schema " + std::string(kSimGridSchema));
  SimGrid grid;
  grid.etas = j.value("etas", std::vector<double>{1e-4, 1e-3, 1e-2});
  grid.lambdas = j.value("lambdas", std::vector<double>{0.1, 1.0});
  grid.c1s = j.value("c1s", std::vector<double>{0.0, 0.5, 0.9});
  grid.v0 = j.value("v0", 100.0);
  grid.log_ratio = j.value("log_ratio", 4.0);
  if (j.contains("policies")) {
    for (const Json& p : j.at("policies")) {
      const auto pol = remainder_policy_from_name(p.get<std::string>());
      if (!pol) throw std::runtime_error("sim grid: unknown policy " + p.get<std::string>());
      grid.policies.push_back(*pol);
    }
  } else {
    grid.policies = {RemainderPolicy::zero, RemainderPolicy::max_positive,
                     RemainderPolicy::max_negative, RemainderPolicy::random_sign};
  }
  for (double eta : grid.etas)
    for (double lambda : grid.lambdas)
      if (eta * lambda >= 1.0) throw std::runtime_error("sim grid: eta*lambda >= 1 rejected");
  return grid;
}

SimGridReport simulate_grid(const SimGrid& grid) {
  SimGridReport out;
  Json points = Json::array();
  double fitted_k = 0.0;
  bool all_crossed = true;
  std::map<double, std::pair<double, double>> spread_by_c1;  // c1 -> (min, max) of T*eta*lambda

  for (double eta : grid.etas) {
    for (double lambda : grid.lambdas) {
      for (double c1 : grid.c1s) {
        for (RemainderPolicy policy : grid.policies) {
          RecursionConfig cfg;
          cfg.v0 = grid.v0;
          cfg.eta = eta;
          cfg.lambda = lambda;
          cfg.c1 = c1;
          cfg.policy = policy;
          cfg.seed = 1234;
          const double t_ref = grid.log_ratio / (2.0 * eta * lambda);
          cfg.horizon = static_cast<long>(std::ceil(t_ref * 2.0)) + 10;
          const std::vector<double> series = simulate_contraction(cfg);
          const double v_target = grid.v0 * std::exp(-grid.log_ratio);
          const std::optional<long> crossing = crossing_time(series, v_target);

          Json pj;
          pj["eta"] = eta;
          pj["lambda"] = lambda;
          pj["c1"] = c1;
          pj["policy"] = remainder_policy_name(policy);
          pj["t_ref"] = t_ref;
          if (crossing) {
            const double t = static_cast<double>(*crossing);
            const double dev = std::abs(t / t_ref - 1.0);
            fitted_k = std::max(fitted_k, dev / eta);
            pj["crossing"] = *crossing;
            pj["band_dev_over_eta"] = dev / eta;
            pj["t_times_eta_lambda"] = t * eta * lambda;
            auto [it, fresh] = spread_by_c1.try_emplace(c1, t * eta * lambda, t * eta * lambda);
            if (!fresh) {
              it->second.first = std::min(it->second.first, t * eta * lambda);
              it->second.second = std::max(it->second.second, t * eta * lambda);
            }
          } else {
            all_crossed = false;
            pj["crossing"] = nullptr;
          }
          points.push_back(pj);
        }
      }
    }
  }

  out.fitted_k = fitted_k;
  out.all_bounds_hold = all_crossed;
  Json j;
  j["schema"] = "groklab.bound_verification.v1";
  j["points"] = points;
  j["fitted_k"] = fitted_k;
  j["all_crossed"] = all_crossed ? 1 : 0;
  Json spreads;
  for (const auto& [c1, mm] : spread_by_c1) {
    const double spread = mm.first > 0.0 ? mm.second / mm.first - 1.0 : 0.0;
    char key[32];
    std::snprintf(key, sizeof key, "c1_%g", c1);
    spreads[key] = spread;
    if (c1 == 0.0) out.inverse_scaling_spread_c1_0 = spread;
  }
  j["inverse_scaling_spread"] = spreads;
  out.report = j;
  return out;
}

std::vector<std::string> emit_figures(const std::string& runs_dir) {
  std::vector<std::string> notes;
  const std::vector<LoadedRun> loaded = load_runs(runs_dir, notes);
  const std::string fig_dir = runs_dir + "/figures";
  fs::create_directories(fig_dir);
  std::vector<std::string> written;

  auto fmt = [](double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return std::string(buf);
  };

  // Trajectory collapse: tau = 2 eta lambda (t - T_mem), V normalized by V_mem.
  {
    std::vector<std::string> headers;
    std::vector<std::vector<std::string>> columns;
    for (const LoadedRun& run : loaded) {
      if (!run.has_log || !run.summary.t_mem || !run.summary.v_mem) continue;
      const long t_mem = *run.summary.t_mem;
      std::vector<std::string> tau_col, v_col;
      for (const TrajRow& r : run.log.rows) {
        if (r.step < t_mem) continue;
        tau_col.push_back(fmt(2.0 * run.log.eta * run.log.lambda * static_cast<double>(r.step - t_mem)));
        v_col.push_back(fmt(r.v / *run.summary.v_mem));
      }
      headers.push_back("tau_" + run.summary.run_id);
      headers.push_back("vnorm_" + run.summary.run_id);
      columns.push_back(std::move(tau_col));
      columns.push_back(std::move(v_col));
    }
    std::ostringstream out;
    out << "# groklab.fig.collapse.v1\n";
    for (std::size_t i = 0; i < headers.size(); ++i) out << headers[i] << (i + 1 < headers.size() ? ' ' : '\n');
    if (headers.empty()) out << '\n';
    std::size_t rows = 0;
    for (const auto& c : columns) rows = std::max(rows, c.size());
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < columns.size(); ++c) {
        out << (r < columns[c].size() ? columns[c][r] : "-");
        out << (c + 1 < columns.size() ? ' ' : '\n');
      }
    }
    std::ofstream f(fig_dir + "/collapse.txt");
    f << out.str();
    written.push_back("collapse.txt");
  }

  // Kappa vs (lambda, p) table, one row per cell.
  {
    std::vector<std::string> dummy;
    std::vector<RunRecord> records;
    for (const LoadedRun& run : loaded)
      if (run.has_log) records.push_back(analyze_run(run.summary, run.log));
    const CampaignStats stats = cell_statistics(records);
    std::ostringstream out;
    out << "# groklab.fig.kappa_table.v1\n";
    out << "cell_id arch task p eta lambda n_admitted kappa_median kappa_iqr_lo kappa_iqr_hi\n";
    for (const CellSummary& c : stats.cells) {
      out << c.cell_id << ' ' << c.arch << ' ' << c.task << ' ' << c.p << ' ' << fmt(c.eta) << ' '
          << fmt(c.lambda) << ' ' << c.n_kappa_admitted << ' ';
      out << (c.kappa_median ? fmt(*c.kappa_median) : "-") << ' ';
      out << (c.kappa_iqr ? fmt(c.kappa_iqr->q1) : "-") << ' ';
      out << (c.kappa_iqr ? fmt(c.kappa_iqr->q3) : "-") << '\n';
    }
    std::ofstream f(fig_dir + "/kappa_table.txt");
    f << out.str();
    written.push_back("kappa_table.txt");
  }

  // Phase plane (alpha_t, V_t), with T_mem and the val-acc 0.5 crossing marked.
  {
    std::ostringstream out;
    out << "# groklab.fig.phase_plane.v1\n";
    out << "run_id step alpha_deg v marker\n";
    for (const LoadedRun& run : loaded) {
      if (!run.has_log || !run.summary.t_mem) continue;
      const auto crossing = measure_crossing(run.log, 0.5);
      bool crossing_marked = false;
      for (const TrajRow& r : run.log.rows) {
        if (!r.has_cos) continue;
        const double alpha =
            std::acos(std::clamp(r.cos_to_ref, -1.0, 1.0)) * 180.0 / std::numbers::pi;
        std::string marker = "-";
        if (r.step == *run.summary.t_mem) marker = "mem";
        if (!crossing_marked && crossing && static_cast<double>(r.step) >= crossing->step) {
          marker = "cross";
          crossing_marked = true;
        }
        out << run.summary.run_id << ' ' << r.step << ' ' << fmt(alpha) << ' ' << fmt(r.v) << ' '
            << marker << '\n';
      }
    }
    std::ofstream f(fig_dir + "/phase_plane.txt");
    f << out.str();
    written.push_back("phase_plane.txt");
  }

  // Overshoot scatter.
  {
    std::ostringstream out;
    out << "# groklab.fig.overshoot.v1\n";
    out << "run_id rho_drop extra_delay_ratio\n";
    for (const LoadedRun& run : loaded) {
      if (!run.has_log || !run.summary.t_grok_95) continue;
      try {
        const OvershootMetrics m = overshoot_metrics(run.log, run.summary);
        out << run.summary.run_id << ' ' << fmt(m.rho_drop) << ' '
            << (m.extra_delay_ratio ? fmt(*m.extra_delay_ratio) : "-") << '\n';
      } catch (const std::exception&) {
      }
    }
    std::ofstream f(fig_dir + "/overshoot_scatter.txt");
    f << out.str();
    written.push_back("overshoot_scatter.txt");
  }

  return written;
}

}  // namespace groklab
