#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "groklab/models.hpp"
#include "groklab/trainer.hpp"

namespace groklab {

// --- descriptive statistics with pinned rules ------------------------------
// Quantiles use the inclusive-hinge midpoint rule (median of each half, the
// median itself included in both halves when n is odd) so IQR values are
// reproducible across implementations. Std deviations are population (1/n).

double mean_of(std::span<const double> v);
double stddev_pop(std::span<const double> v);
double median_of(std::vector<double> v);

struct Iqr {
  double q1 = 0.0;
  double q3 = 0.0;
};
Iqr iqr_of(std::vector<double> v);

// --- per-trajectory fits ----------------------------------------------------

struct KappaFit {
  double kappa_ll = 0.0;       // |slope| / (2 eta lambda)
  double slope_per_step = 0.0;  // d(log V)/dt from the OLS fit
  double r_squared = 0.0;
  long win_lo = 0;
  long win_hi = 0;
  int n_points = 0;
  double eta = 0.0;
  double lambda = 0.0;
};

enum class WindowRule { standard, soft95 };

// Log-linear fit of log V on t over [T_mem + margin, T_grok - margin]
// (T_grok^0.95 as the upper limit under the soft95 rule).
KappaFit fit_kappa_loglinear(const TrajectoryLog& log, WindowRule rule = WindowRule::standard,
                             long margin = 100);
KappaFit fit_kappa_window(const TrajectoryLog& log, long lo, long hi);

struct KossonFit {
  double v_inf = 0.0;
  double amplitude = 0.0;      // coefficient of exp(-rate * (t - window start))
  double rate_per_step = 0.0;
  double kappa_kos = 0.0;      // rate / (2 eta lambda)
  double r_squared = 0.0;
  bool converged = true;
};

// V_t = V_inf + A exp(-r t), fit by a log-spaced scan over r with a
// closed-form linear solve for (V_inf, A), then golden-section refinement.
// V_inf is constrained to be non-negative.
KossonFit fit_kosson(const TrajectoryLog& log, long lo, long hi);

struct TimescaleFit {
  double tau_v = 0.0;
  std::optional<double> tau_alpha;
  std::optional<double> ratio;  // tau_v / tau_alpha
  double alpha_final_deg = 0.0;
  bool no_angular_motion = false;  // alpha never rose above 1 degree
};

TimescaleFit fit_timescales(const TrajectoryLog& log, long margin = 100);

struct CrossingPoint {
  double v_star = 0.0;
  std::optional<double> alpha_star_deg;
  double step = 0.0;
};

// V and alpha at the val-accuracy crossing, linearly interpolated between the
// bracketing logged rows (or taken directly from an exact-threshold row).
std::optional<CrossingPoint> measure_crossing(const TrajectoryLog& log, double val_threshold = 0.5);

// --- the predictive law -----------------------------------------------------

struct DelayPrediction {
  double steps = 0.0;
  bool clamped = false;  // V_mem below the target; prediction clamped to 0
};

DelayPrediction predict_delay_B(double kappa_train, double v_star_train, double eta, double lambda,
                                double v_mem);
DelayPrediction predict_delay_A(double kappa_train, double eta, double lambda, double v_mem,
                                double v_post);

double mape(std::span<const double> predicted, std::span<const double> observed);

// --- quantile-margin constants ----------------------------------------------

double q_delta(double p_chance, double q_grok);

// Smallest |margin| among misclassified examples such that at least a
// q-fraction of them lies at or below it.
double quantile_margin(const std::vector<MarginReport>& reports, double q);

struct AlphaStarModel {
  double m_q = 0.0;
  double g_eff = 0.0;  // effective feature-norm bound in the chosen convention
  double eps_lin = 0.0;
  double eps_hom = 0.0;
  std::optional<double> c;  // C-form constant sin(alpha*) sqrt(V_Tmem)
  // single_g divides by g_eff * sqrt(V); double_g by 2 * g_eff * sqrt(V).
  enum class Convention { single_g, double_g };
  Convention convention = Convention::single_g;
};

struct AlphaStarResult {
  std::optional<double> decomposed_deg;  // from (M_q, G_eff), when m_q/g_eff given
  std::optional<double> c_form_deg;      // primary prediction, when C given
  bool out_of_range = false;             // arcsin argument outside [0, 1]; flagged, not clipped
};

AlphaStarResult alpha_star_from_constants(const AlphaStarModel& model, double v_t_mem);

struct CCalibrationRow {
  double p = 0.0;
  double sqrt_v_t_mem = 0.0;
  double alpha_star_obs_deg = 0.0;
};

struct CCalibration {
  std::vector<double> c_per_cell;
  double mean = 0.0;
  double stddev = 0.0;
  double cv = 0.0;
};

CCalibration calibrate_C(std::span<const CCalibrationRow> rows);

// --- power laws and bootstrap -------------------------------------------------

struct PowerLawFit {
  double amplitude = 0.0;
  double exponent = 0.0;
  double r_squared = 0.0;
  double exponent_ci_lo = 0.0;
  double exponent_ci_hi = 0.0;
  int n_bootstrap = 0;
};

PowerLawFit power_law_fit(std::span<const double> x, std::span<const double> y, int n_bootstrap,
                          std::uint64_t seed = 7);

struct OvershootMetrics {
  double v_at_t95 = 0.0;
  double v_min_post = 0.0;
  double v_max_post = 0.0;
  double rho_drop = 0.0;  // v_min_post / v_at_t95
  std::optional<double> extra_delay_ratio;  // (T99 - T95) / (T95 - T_mem)
};

OvershootMetrics overshoot_metrics(const TrajectoryLog& log, const RunSummary& summary);

PowerLawFit fit_overshoot_law(std::span<const std::pair<double, double>> runs, int n_bootstrap = 0,
                              std::uint64_t seed = 7);

enum class Statistic { mean, median };

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

Interval bootstrap_ci(std::span<const double> samples, Statistic stat, int n_resamples,
                      std::uint64_t seed = 7);

// --- campaign-level statistics ------------------------------------------------

struct RunRecord {
  RunSummary summary;
  std::optional<KappaFit> kappa;         // standard window
  std::optional<KappaFit> kappa_soft95;  // T_grok^0.95 upper limit
  std::optional<KossonFit> kosson;
  std::optional<TimescaleFit> timescales;
  std::optional<CrossingPoint> crossing;
  bool trajectory_missing = false;
};

RunRecord analyze_run(const RunSummary& summary, const TrajectoryLog& log);

inline constexpr double kKappaAdmissionR2 = 0.9;

struct CellSummary {
  std::string cell_id;
  std::string arch;
  std::string task;
  int p = 0;
  double eta = 0.0;
  double lambda = 0.0;
  int n_runs = 0;
  int n_grokked = 0;
  int n_kappa_admitted = 0;  // R^2 > 0.9
  std::optional<double> kappa_median;
  std::optional<Iqr> kappa_iqr;
  std::optional<double> kappa_cv;  // only for n >= 2
  std::optional<double> kappa_kos_median;
  std::optional<double> f_window_median;  // kappa_ll / kappa_kos
  std::optional<double> r2_median;
  std::optional<double> v_star_median;
  std::optional<double> alpha_star_median_deg;
  std::optional<double> v_mem_median;
  std::optional<double> v_post_median;
  std::optional<double> ratio_v_star_over_v_mem;
  std::optional<double> tau_ratio_median;
  std::optional<double> delay_median;
};

struct CampaignStats {
  std::vector<CellSummary> cells;
  std::optional<double> pooled_kappa_cv;
  std::optional<double> pooled_kappa_median;
  std::optional<double> within_cell_median_cv;
};

CampaignStats cell_statistics(const std::vector<RunRecord>& records);

struct TierCellRow {
  std::string cell_id;
  int tier = 0;
  int n = 0;
  double median_t_grok = 0.0;
  std::optional<double> mape_b;
  std::optional<double> mape_a;
};

struct TierPool {
  int n = 0;
  std::optional<double> mape_a;
  std::optional<double> mape_b;
  double delay_range = 0.0;  // max observed delay / min observed delay
};

struct TierReport {
  std::string calibration_cell_id;
  double kappa_train = 0.0;
  double v_star_train = 0.0;
  int n_calibration_runs = 0;
  std::vector<TierCellRow> cells;
  std::optional<TierPool> tier1;
  std::optional<TierPool> tier2;
  std::optional<TierPool> tier3;
  std::vector<std::string> notes;
};

TierReport three_tier_report(const std::vector<RunRecord>& records,
                             const std::string& calibration_cell_id);

struct LoocvResult {
  double v_star_variation_pct = 0.0;
  double kappa_variation_pct = 0.0;
  int folds = 0;
};

LoocvResult loocv_calibration(const std::vector<RunRecord>& cell_runs);

struct RatioStability {
  std::string arch;
  int n_cells = 0;
  double mean = 0.0;
  double stddev = 0.0;
  std::optional<double> cv;
  double min = 0.0;
  double max = 0.0;
};

std::vector<RatioStability> ratio_stability(const std::vector<CellSummary>& cells);

}  // namespace groklab
