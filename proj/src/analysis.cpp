#include "groklab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>

#include "groklab/core_math.hpp"
#include "groklab/rng.hpp"

namespace groklab {

namespace {

double deg_from_cos(double c) {
  return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  // Linear interpolation on (n-1)q; used for bootstrap percentiles only.
  if (sorted.empty()) throw std::invalid_argument("quantile of empty set");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

double median_span(std::span<const double> sorted) {
  const std::size_t n = sorted.size();
  return n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

struct WindowPoints {
  std::vector<double> t;
  std::vector<double> v;
  long lo = 0, hi = 0;
};

WindowPoints window_points(const TrajectoryLog& log, long lo, long hi) {
  WindowPoints w;
  w.lo = lo;
  w.hi = hi;
  for (const TrajRow& r : log.rows) {
    if (r.step >= lo && r.step <= hi) {
      w.t.push_back(static_cast<double>(r.step));
      w.v.push_back(r.v);
    }
  }
  return w;
}

std::optional<double> median_opt(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  return median_of(std::move(v));
}

}  // namespace

double mean_of(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean of empty set");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev_pop(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

double median_of(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty set");
  std::sort(v.begin(), v.end());
  return median_span(v);
}

Iqr iqr_of(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("iqr of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const std::size_t half = (n + 1) / 2;  // median included in both halves when n odd
  Iqr out;
  out.q1 = median_span(std::span<const double>(v.data(), half));
  out.q3 = median_span(std::span<const double>(v.data() + (n - half), half));
  return out;
}

KappaFit fit_kappa_window(const TrajectoryLog& log, long lo, long hi) {
  const WindowPoints w = window_points(log, lo, hi);
  if (w.t.size() < 5) {
    throw std::runtime_error("fit window too short: " + std::to_string(w.t.size()) +
                             " logged points in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  std::vector<double> logv(w.v.size());
  for (std::size_t i = 0; i < w.v.size(); ++i) {
    if (w.v[i] <= 0.0) throw std::runtime_error("fit_kappa: non-positive V in window");
    logv[i] = std::log(w.v[i]);
  }
  const LineFit line = least_squares_line(w.t, logv);
  KappaFit fit;
  fit.slope_per_step = line.slope;
  fit.r_squared = line.r_squared;
  fit.win_lo = lo;
  fit.win_hi = hi;
  fit.n_points = line.n_points;
  fit.eta = log.eta;
  fit.lambda = log.lambda;
  fit.kappa_ll = std::abs(line.slope) / (2.0 * log.eta * log.lambda);
  return fit;
}

KappaFit fit_kappa_loglinear(const TrajectoryLog& log, WindowRule rule, long margin) {
  const std::optional<long> t_mem = detect_t_mem(log, TMemMode::acc);
  if (!t_mem) throw std::runtime_error("fit_kappa: T_mem not reached");
  const std::optional<long> t_hi =
      detect_t_grok(log, rule == WindowRule::standard ? 0.99 : 0.95);
  if (!t_hi) throw std::runtime_error("fit_kappa: T_grok not reached");
  return fit_kappa_window(log, *t_mem + margin, *t_hi - margin);
}

KossonFit fit_kosson(const TrajectoryLog& log, long lo, long hi) {
  const WindowPoints w = window_points(log, lo, hi);
  const std::size_t n = w.t.size();
  if (n < 8) throw std::runtime_error("fit_kosson: need >= 8 points, have " + std::to_string(n));

  const double t0 = w.t.front();
  const double span = w.t.back() - t0;
  if (span <= 0.0) throw std::runtime_error("fit_kosson: degenerate window");

  double sy = 0.0, syy = 0.0;
  for (double y : w.v) {
    sy += y;
    syy += y * y;
  }
  const double mean_y = sy / static_cast<double>(n);
  const double ss_tot = syy - sy * mean_y;

  struct Solution {
    double v_inf = 0.0, a = 0.0, sse = 0.0;
  };
  auto solve_at = [&](double r) {
    double se = 0.0, see = 0.0, sye = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = std::exp(-r * (w.t[i] - t0));
      se += e;
      see += e * e;
      sye += w.v[i] * e;
    }
    const double nn = static_cast<double>(n);
    const double det = nn * see - se * se;
    Solution s;
    if (std::abs(det) < 1e-300) {
      s.v_inf = mean_y;
      s.a = 0.0;
    } else {
      s.v_inf = (sy * see - sye * se) / det;
      s.a = (nn * sye - sy * se) / det;
      if (s.v_inf < 0.0) {  // constrained refit on the boundary
        s.v_inf = 0.0;
        s.a = see > 0.0 ? sye / see : 0.0;
      }
    }
    s.sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = std::exp(-r * (w.t[i] - t0));
      const double d = w.v[i] - s.v_inf - s.a * e;
      s.sse += d * d;
    }
    return s;
  };

  constexpr int kGrid = 256;
  const double r_min = 0.01 / span;
  const double r_max = 50.0 / span;
  double best_r = r_min;
  double best_sse = std::numeric_limits<double>::infinity();
  double worst_sse = 0.0;
  int best_idx = 0;
  std::vector<double> grid(kGrid);
  for (int i = 0; i < kGrid; ++i) {
    const double f = static_cast<double>(i) / (kGrid - 1);
    grid[static_cast<std::size_t>(i)] = r_min * std::pow(r_max / r_min, f);
    const double sse = solve_at(grid[static_cast<std::size_t>(i)]).sse;
    worst_sse = std::max(worst_sse, sse);
    if (sse < best_sse) {
      best_sse = sse;
      best_r = grid[static_cast<std::size_t>(i)];
      best_idx = i;
    }
  }

  // Golden-section refinement in log r between the neighbours of the best
  // grid point.
  double a = std::log(grid[static_cast<std::size_t>(std::max(0, best_idx - 1))]);
  double b = std::log(grid[static_cast<std::size_t>(std::min(kGrid - 1, best_idx + 1))]);
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a);
  double d = a + gr * (b - a);
  double fc = solve_at(std::exp(c)).sse;
  double fd = solve_at(std::exp(d)).sse;
  for (int it = 0; it < 90 && (b - a) > 1e-14; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = solve_at(std::exp(c)).sse;
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = solve_at(std::exp(d)).sse;
    }
  }
  const double r_star = std::exp(0.5 * (a + b));
  const Solution sol = solve_at(r_star);

  KossonFit fit;
  fit.v_inf = sol.v_inf;
  fit.amplitude = sol.a;
  fit.rate_per_step = r_star;
  fit.kappa_kos = r_star / (2.0 * log.eta * log.lambda);
  fit.r_squared = ss_tot > 0.0 ? 1.0 - sol.sse / ss_tot : 0.0;
  fit.converged = true;
  if (best_idx == 0 || best_idx == kGrid - 1) fit.converged = false;
  if (worst_sse > 0.0 && (worst_sse - best_sse) / worst_sse < 1e-12) fit.converged = false;
  return fit;
}

TimescaleFit fit_timescales(const TrajectoryLog& log, long margin) {
  const std::optional<long> t_mem = detect_t_mem(log, TMemMode::acc);
  if (!t_mem) throw std::runtime_error("fit_timescales: T_mem not reached");
  const std::optional<long> t99 = detect_t_grok(log, 0.99);
  const long hi = t99 ? *t99 - margin : log.rows.back().step;

  TimescaleFit out;
  const KappaFit kv = fit_kappa_window(log, *t_mem + margin, hi);
  out.tau_v = 1.0 / std::abs(kv.slope_per_step);

  std::vector<double> tprime, alpha;
  for (const TrajRow& r : log.rows) {
    if (r.has_cos && r.step >= *t_mem) {
      tprime.push_back(static_cast<double>(r.step - *t_mem));
      alpha.push_back(deg_from_cos(r.cos_to_ref));
    }
  }
  if (tprime.size() < 5) throw std::runtime_error("fit_timescales: too few angle points");

  const double alpha_max = *std::max_element(alpha.begin(), alpha.end());
  out.alpha_final_deg = alpha.back();
  if (alpha_max < 1.0) {
    out.no_angular_motion = true;  // the norm-freeze / wd-freeze signature
    return out;
  }

  const std::size_t n = alpha.size();
  auto sse_at = [&](double tau) {
    double sgg = 0.0, sag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = 1.0 - std::exp(-tprime[i] / tau);
      sgg += g * g;
      sag += alpha[i] * g;
    }
    const double af = sgg > 0.0 ? sag / sgg : 0.0;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = 1.0 - std::exp(-tprime[i] / tau);
      const double d = alpha[i] - af * g;
      sse += d * d;
    }
    return std::pair{sse, af};
  };

  const double span = tprime.back() > 0.0 ? tprime.back() : 1.0;
  const double tau_min = span * 1e-3;
  const double tau_max = span * 1e3;
  constexpr int kGrid = 256;
  double best_tau = tau_min;
  double best_sse = std::numeric_limits<double>::infinity();
  int best_idx = 0;
  for (int i = 0; i < kGrid; ++i) {
    const double tau = tau_min * std::pow(tau_max / tau_min, static_cast<double>(i) / (kGrid - 1));
    const double sse = sse_at(tau).first;
    if (sse < best_sse) {
      best_sse = sse;
      best_tau = tau;
      best_idx = i;
    }
  }
  double a = std::log(tau_min * std::pow(tau_max / tau_min,
                                         static_cast<double>(std::max(0, best_idx - 1)) / (kGrid - 1)));
  double b = std::log(tau_min * std::pow(tau_max / tau_min,
                                         static_cast<double>(std::min(kGrid - 1, best_idx + 1)) / (kGrid - 1)));
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a);
  double d = a + gr * (b - a);
  double fc = sse_at(std::exp(c)).first;
  double fd = sse_at(std::exp(d)).first;
  for (int it = 0; it < 90 && (b - a) > 1e-14; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = sse_at(std::exp(c)).first;
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = sse_at(std::exp(d)).first;
    }
  }
  const double tau_alpha = std::exp(0.5 * (a + b));
  out.tau_alpha = tau_alpha;
  out.ratio = out.tau_v / tau_alpha;
  out.alpha_final_deg = sse_at(tau_alpha).second;  // fitted saturation level
  (void)best_tau;
  return out;
}

std::optional<CrossingPoint> measure_crossing(const TrajectoryLog& log, double val_threshold) {
  const auto& rows = log.rows;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].val_acc < val_threshold) continue;
    CrossingPoint cp;
    if (rows[i].val_acc == val_threshold || i == 0) {
      cp.v_star = rows[i].v;
      cp.step = static_cast<double>(rows[i].step);
      if (rows[i].has_cos) cp.alpha_star_deg = deg_from_cos(rows[i].cos_to_ref);
      return cp;
    }
    const TrajRow& r0 = rows[i - 1];
    const TrajRow& r1 = rows[i];
    const double f = (val_threshold - r0.val_acc) / (r1.val_acc - r0.val_acc);
    cp.v_star = r0.v + f * (r1.v - r0.v);
    cp.step = static_cast<double>(r0.step) + f * static_cast<double>(r1.step - r0.step);
    if (r0.has_cos && r1.has_cos) {
      const double a0 = deg_from_cos(r0.cos_to_ref);
      const double a1 = deg_from_cos(r1.cos_to_ref);
      cp.alpha_star_deg = a0 + f * (a1 - a0);
    }
    return cp;
  }
  return std::nullopt;
}

DelayPrediction predict_delay_B(double kappa_train, double v_star_train, double eta, double lambda,
                                double v_mem) {
  if (kappa_train <= 0.0 || eta <= 0.0 || lambda <= 0.0)
    throw std::invalid_argument("predict_delay_B: rate inputs must be positive");
  if (v_mem <= 0.0 || v_star_train <= 0.0)
    throw std::invalid_argument("predict_delay_B: norms must be positive");
  const double steps = std::log(v_mem / v_star_train) / (2.0 * kappa_train * eta * lambda);
  if (steps < 0.0) return {0.0, true};
  return {steps, false};
}

DelayPrediction predict_delay_A(double kappa_train, double eta, double lambda, double v_mem,
                                double v_post) {
  if (kappa_train <= 0.0 || eta <= 0.0 || lambda <= 0.0)
    throw std::invalid_argument("predict_delay_A: rate inputs must be positive");
  if (v_mem <= 0.0 || v_post <= 0.0)
    throw std::invalid_argument("predict_delay_A: norms must be positive");
  const double rho = std::log(v_mem / v_post);
  const double steps = rho / (2.0 * kappa_train * eta * lambda);
  if (steps < 0.0) return {0.0, true};
  return {steps, false};
}

double mape(std::span<const double> predicted, std::span<const double> observed) {
  if (predicted.size() != observed.size() || predicted.empty())
    throw std::invalid_argument("mape: need matched non-empty inputs");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (observed[i] <= 0.0) throw std::invalid_argument("mape: observed values must be positive");
    s += std::abs(predicted[i] - observed[i]) / observed[i];
  }
  return 100.0 * s / static_cast<double>(predicted.size());
}

double q_delta(double p_chance, double q_grok) {
  if (p_chance < 0.0 || p_chance >= q_grok || q_grok > 1.0)
    throw std::invalid_argument("q_delta: need 0 <= p_chance < q_grok <= 1");
  return (q_grok - p_chance) / (1.0 - p_chance);
}

double quantile_margin(const std::vector<MarginReport>& reports, double q) {
  if (q <= 0.0 || q > 1.0) throw std::invalid_argument("quantile_margin: q in (0, 1]");
  std::vector<double> mags;
  for (const MarginReport& r : reports)
    if (r.misclassified) mags.push_back(std::abs(r.margin));
  if (mags.empty()) throw std::runtime_error("no misclassified examples");
  std::sort(mags.begin(), mags.end());
  const auto n = static_cast<double>(mags.size());
  auto k = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
  k = std::clamp<std::size_t>(k, 1, mags.size());
  return mags[k - 1];
}

AlphaStarResult alpha_star_from_constants(const AlphaStarModel& model, double v_t_mem) {
  if (v_t_mem <= 0.0) throw std::invalid_argument("alpha_star_from_constants: V_Tmem must be positive");
  AlphaStarResult out;
  const double sqrt_v = std::sqrt(v_t_mem);
  auto to_deg = [&](double arg) -> std::optional<double> {
    if (arg < 0.0 || arg > 1.0) {
      out.out_of_range = true;  // unreachable threshold; flagged, never clipped
      return std::nullopt;
    }
    return std::asin(arg) * 180.0 / std::numbers::pi;
  };
  if (model.g_eff > 0.0) {
    const double denom_factor = model.convention == AlphaStarModel::Convention::double_g ? 2.0 : 1.0;
    const double arg =
        (model.m_q - 2.0 * (model.eps_lin + model.eps_hom)) / (denom_factor * model.g_eff * sqrt_v);
    out.decomposed_deg = to_deg(arg);
  }
  if (model.c) out.c_form_deg = to_deg(*model.c / sqrt_v);
  return out;
}

CCalibration calibrate_C(std::span<const CCalibrationRow> rows) {
  if (rows.empty()) throw std::invalid_argument("calibrate_C: need at least one cell");
  CCalibration out;
  for (const CCalibrationRow& r : rows) {
    const double c = std::sin(r.alpha_star_obs_deg * std::numbers::pi / 180.0) * r.sqrt_v_t_mem;
    out.c_per_cell.push_back(c);
  }
  out.mean = mean_of(out.c_per_cell);
  out.stddev = stddev_pop(out.c_per_cell);
  out.cv = out.mean != 0.0 ? out.stddev / out.mean : 0.0;
  return out;
}

PowerLawFit power_law_fit(std::span<const double> x, std::span<const double> y, int n_bootstrap,
                          std::uint64_t seed) {
  if (x.size() != y.size() || x.size() < 3)
    throw std::invalid_argument("power_law_fit: need >= 3 matched points");
  std::vector<double> lx(x.size()), ly(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= 0.0 || y[i] <= 0.0)
      throw std::invalid_argument("power_law_fit: inputs must be positive");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  const LineFit line = least_squares_line(lx, ly);
  PowerLawFit fit;
  fit.exponent = line.slope;
  fit.amplitude = std::exp(line.intercept);
  fit.r_squared = line.r_squared;
  fit.exponent_ci_lo = line.slope;
  fit.exponent_ci_hi = line.slope;
  fit.n_bootstrap = n_bootstrap;
  if (n_bootstrap > 0) {
    Rng rng = Rng(seed).split("bootstrap");
    std::vector<double> slopes;
    slopes.reserve(static_cast<std::size_t>(n_bootstrap));
    std::vector<double> bx(x.size()), by(y.size());
    for (int b = 0; b < n_bootstrap; ++b) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(x.size()));
        bx[i] = lx[j];
        by[i] = ly[j];
      }
      try {
        slopes.push_back(least_squares_line(bx, by).slope);
      } catch (const std::invalid_argument&) {
        // degenerate resample (all x equal); contributes nothing
      }
    }
    if (slopes.size() >= 2) {
      std::sort(slopes.begin(), slopes.end());
      fit.exponent_ci_lo = quantile_sorted(slopes, 0.025);
      fit.exponent_ci_hi = quantile_sorted(slopes, 0.975);
    }
  }
  return fit;
}

OvershootMetrics overshoot_metrics(const TrajectoryLog& log, const RunSummary& summary) {
  if (!summary.t_grok_95) throw std::runtime_error("overshoot_metrics: T_grok_95 absent");
  const long t95 = *summary.t_grok_95;
  OvershootMetrics out;
  bool found = false;
  for (const TrajRow& r : log.rows) {
    if (r.step < t95) continue;
    if (r.step == t95) out.v_at_t95 = r.v;
    if (!found) {
      out.v_min_post = r.v;
      out.v_max_post = r.v;
      found = true;
    } else {
      out.v_min_post = std::min(out.v_min_post, r.v);
      out.v_max_post = std::max(out.v_max_post, r.v);
    }
  }
  if (!found || out.v_at_t95 <= 0.0) throw std::runtime_error("overshoot_metrics: no rows at/after T_grok_95");
  out.rho_drop = out.v_min_post / out.v_at_t95;
  if (summary.t_grok_99 && summary.t_mem && t95 > *summary.t_mem) {
    out.extra_delay_ratio = static_cast<double>(*summary.t_grok_99 - t95) /
                            static_cast<double>(t95 - *summary.t_mem);
  }
  return out;
}

PowerLawFit fit_overshoot_law(std::span<const std::pair<double, double>> runs, int n_bootstrap,
                              std::uint64_t seed) {
  if (runs.size() < 5) throw std::invalid_argument("fit_overshoot_law: need >= 5 runs");
  std::vector<double> x, y;
  for (const auto& [rho, ratio] : runs) {
    x.push_back(rho);
    y.push_back(ratio);
  }
  return power_law_fit(x, y, n_bootstrap, seed);
}

Interval bootstrap_ci(std::span<const double> samples, Statistic stat, int n_resamples,
                      std::uint64_t seed) {
  if (samples.size() < 2) throw std::invalid_argument("bootstrap_ci: need >= 2 samples");
  Rng rng = Rng(seed).split("bootstrap");
  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(n_resamples));
  std::vector<double> re(samples.size());
  for (int b = 0; b < n_resamples; ++b) {
    for (std::size_t i = 0; i < samples.size(); ++i)
      re[i] = samples[static_cast<std::size_t>(rng.uniform_int(samples.size()))];
    stats.push_back(stat == Statistic::mean ? mean_of(re) : median_of(re));
  }
  std::sort(stats.begin(), stats.end());
  return {quantile_sorted(stats, 0.025), quantile_sorted(stats, 0.975)};
}

RunRecord analyze_run(const RunSummary& summary, const TrajectoryLog& log) {
  RunRecord rec;
  rec.summary = summary;
  try {
    rec.kappa = fit_kappa_loglinear(log, WindowRule::standard);
  } catch (const std::exception&) {
  }
  try {
    rec.kappa_soft95 = fit_kappa_loglinear(log, WindowRule::soft95);
  } catch (const std::exception&) {
  }
  if (rec.kappa) {
    try {
      rec.kosson = fit_kosson(log, rec.kappa->win_lo, rec.kappa->win_hi);
    } catch (const std::exception&) {
    }
  }
  try {
    rec.timescales = fit_timescales(log);
  } catch (const std::exception&) {
  }
  rec.crossing = measure_crossing(log, 0.5);
  return rec;
}

namespace {

std::string task_desc(const TaskConfig& t) {
  if (t.kind == TaskConfig::Kind::modular)
    return std::string("modular_") + (t.op == ModOp::add ? "add" : "mult");
  return "parity";
}

}  // namespace

CampaignStats cell_statistics(const std::vector<RunRecord>& records) {
  std::map<std::string, std::vector<const RunRecord*>> by_cell;
  for (const RunRecord& r : records) by_cell[r.summary.config.cell_id].push_back(&r);

  CampaignStats stats;
  std::vector<double> pooled_kappa;
  std::vector<double> cell_cvs;

  for (const auto& [cell_id, runs] : by_cell) {
    CellSummary cs;
    cs.cell_id = cell_id;
    const RunConfig& c0 = runs.front()->summary.config;
    cs.arch = arch_name(c0.arch.arch);
    cs.task = task_desc(c0.task);
    cs.p = c0.task.kind == TaskConfig::Kind::modular ? c0.task.p : 0;
    cs.eta = c0.optim.eta;
    cs.lambda = c0.optim.lambda;
    cs.n_runs = static_cast<int>(runs.size());

    std::vector<double> kappas, kappas_kos, f_windows, r2s, v_stars, alpha_stars, v_mems, v_posts,
        tau_ratios, delays;
    for (const RunRecord* r : runs) {
      if (r->summary.grokked) ++cs.n_grokked;
      if (r->kappa) {
        r2s.push_back(r->kappa->r_squared);
        if (r->kappa->r_squared > kKappaAdmissionR2) {
          ++cs.n_kappa_admitted;
          kappas.push_back(r->kappa->kappa_ll);
          if (r->kosson && r->kosson->converged && r->kosson->kappa_kos > 0.0) {
            kappas_kos.push_back(r->kosson->kappa_kos);
            f_windows.push_back(r->kappa->kappa_ll / r->kosson->kappa_kos);
          }
        }
      }
      if (r->crossing) {
        v_stars.push_back(r->crossing->v_star);
        if (r->crossing->alpha_star_deg) alpha_stars.push_back(*r->crossing->alpha_star_deg);
      }
      if (r->summary.v_mem) v_mems.push_back(*r->summary.v_mem);
      if (r->summary.v_post) v_posts.push_back(*r->summary.v_post);
      if (r->timescales && r->timescales->ratio) tau_ratios.push_back(*r->timescales->ratio);
      if (r->summary.t_grok_99 && r->summary.t_mem)
        delays.push_back(static_cast<double>(*r->summary.t_grok_99 - *r->summary.t_mem));
    }

    if (!kappas.empty()) {
      cs.kappa_median = median_of(kappas);
      cs.kappa_iqr = iqr_of(kappas);
      if (kappas.size() >= 2) {
        const double m = mean_of(kappas);
        cs.kappa_cv = m != 0.0 ? stddev_pop(kappas) / m : 0.0;
        if (cs.kappa_cv) cell_cvs.push_back(*cs.kappa_cv);
      }
      for (double k : kappas) pooled_kappa.push_back(k);
    }
    cs.kappa_kos_median = median_opt(kappas_kos);
    cs.f_window_median = median_opt(f_windows);
    cs.r2_median = median_opt(r2s);
    cs.v_star_median = median_opt(v_stars);
    cs.alpha_star_median_deg = median_opt(alpha_stars);
    cs.v_mem_median = median_opt(v_mems);
    cs.v_post_median = median_opt(v_posts);
    cs.tau_ratio_median = median_opt(tau_ratios);
    cs.delay_median = median_opt(delays);
    if (cs.v_star_median && cs.v_mem_median && *cs.v_mem_median > 0.0)
      cs.ratio_v_star_over_v_mem = *cs.v_star_median / *cs.v_mem_median;
    stats.cells.push_back(std::move(cs));
  }

  if (pooled_kappa.size() >= 2) {
    const double m = mean_of(pooled_kappa);
    stats.pooled_kappa_cv = m != 0.0 ? stddev_pop(pooled_kappa) / m : 0.0;
  }
  if (!pooled_kappa.empty()) stats.pooled_kappa_median = median_of(pooled_kappa);
  if (!cell_cvs.empty()) stats.within_cell_median_cv = median_of(cell_cvs);
  return stats;
}

TierReport three_tier_report(const std::vector<RunRecord>& records,
                             const std::string& calibration_cell_id) {
  TierReport report;
  report.calibration_cell_id = calibration_cell_id;

  std::vector<const RunRecord*> calib;
  std::vector<const RunRecord*> held_out;
  for (const RunRecord& r : records) {
    if (r.summary.config.cell_id == calibration_cell_id)
      calib.push_back(&r);
    else
      held_out.push_back(&r);
  }
  if (calib.empty()) throw std::runtime_error("three_tier_report: calibration cell not found");

  std::vector<double> kappas, v_stars;
  for (const RunRecord* r : calib) {
    if (r->kappa && r->kappa->r_squared > kKappaAdmissionR2) kappas.push_back(r->kappa->kappa_ll);
    if (r->crossing) v_stars.push_back(r->crossing->v_star);
  }
  if (kappas.size() < 3)
    throw std::runtime_error("three_tier_report: calibration cell needs >= 3 qualifying runs (R^2 > 0.9)");
  report.kappa_train = median_of(kappas);
  report.v_star_train = median_of(v_stars);
  report.n_calibration_runs = static_cast<int>(calib.size());

  const RunConfig& cc = calib.front()->summary.config;
  auto tier_of = [&](const RunConfig& c) {
    const int p = c.task.kind == TaskConfig::Kind::modular ? c.task.p : -1;
    const int pc = cc.task.kind == TaskConfig::Kind::modular ? cc.task.p : -1;
    if (p != pc) return 3;
    if (c.arch.arch != cc.arch.arch) return 2;
    return 1;
  };

  struct PredPair {
    double pred_a = 0.0, pred_b = 0.0, observed = 0.0;
    bool has_a = false;
  };
  std::map<std::string, std::vector<PredPair>> by_cell;
  std::map<std::string, std::vector<double>> tgrok_by_cell;
  std::map<std::string, int> tier_by_cell;

  for (const RunRecord* r : held_out) {
    const RunSummary& s = r->summary;
    if (!s.grokked || !s.t_mem || !s.t_grok_99 || !s.v_mem) {
      report.notes.push_back("excluded (no grok or missing observables): " + s.run_id);
      continue;
    }
    const double observed = static_cast<double>(*s.t_grok_99 - *s.t_mem);
    if (observed <= 0.0) {
      report.notes.push_back("excluded (zero delay): " + s.run_id);
      continue;
    }
    PredPair pp;
    pp.observed = observed;
    pp.pred_b = predict_delay_B(report.kappa_train, report.v_star_train, s.config.optim.eta,
                                s.config.optim.lambda, *s.v_mem)
                    .steps;
    if (s.v_post) {
      pp.pred_a = predict_delay_A(report.kappa_train, s.config.optim.eta, s.config.optim.lambda,
                                  *s.v_mem, *s.v_post)
                      .steps;
      pp.has_a = true;
    }
    by_cell[s.config.cell_id].push_back(pp);
    tgrok_by_cell[s.config.cell_id].push_back(static_cast<double>(*s.t_grok_99));
    tier_by_cell[s.config.cell_id] = tier_of(s.config);
  }

  auto mape_of = [](const std::vector<PredPair>& pairs, bool method_a) -> std::optional<double> {
    std::vector<double> pred, obs;
    for (const PredPair& p : pairs) {
      if (method_a && !p.has_a) continue;
      pred.push_back(method_a ? p.pred_a : p.pred_b);
      obs.push_back(p.observed);
    }
    if (pred.empty()) return std::nullopt;
    return mape(pred, obs);
  };

  std::map<int, std::vector<PredPair>> pooled;  // nested: tier t includes tiers <= t
  for (const auto& [cell_id, pairs] : by_cell) {
    TierCellRow row;
    row.cell_id = cell_id;
    row.tier = tier_by_cell[cell_id];
    row.n = static_cast<int>(pairs.size());
    row.median_t_grok = median_of(tgrok_by_cell[cell_id]);
    row.mape_b = mape_of(pairs, false);
    row.mape_a = mape_of(pairs, true);
    report.cells.push_back(row);
    for (int t = tier_by_cell[cell_id]; t <= 3; ++t)
      pooled[t].insert(pooled[t].end(), pairs.begin(), pairs.end());
  }
  std::sort(report.cells.begin(), report.cells.end(),
            [](const TierCellRow& a, const TierCellRow& b) {
              return a.tier != b.tier ? a.tier < b.tier : a.cell_id < b.cell_id;
            });

  for (int t = 1; t <= 3; ++t) {
    if (pooled[t].empty()) {
      report.notes.push_back("tier " + std::to_string(t) + " empty");
      continue;
    }
    TierPool pool;
    pool.n = static_cast<int>(pooled[t].size());
    pool.mape_a = mape_of(pooled[t], true);
    pool.mape_b = mape_of(pooled[t], false);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const PredPair& p : pooled[t]) {
      lo = std::min(lo, p.observed);
      hi = std::max(hi, p.observed);
    }
    pool.delay_range = lo > 0.0 ? hi / lo : 0.0;
    if (t == 1) report.tier1 = pool;
    if (t == 2) report.tier2 = pool;
    if (t == 3) report.tier3 = pool;
  }
  return report;
}

LoocvResult loocv_calibration(const std::vector<RunRecord>& cell_runs) {
  std::vector<const RunRecord*> usable;
  for (const RunRecord& r : cell_runs)
    if (r.kappa && r.kappa->r_squared > kKappaAdmissionR2 && r.crossing) usable.push_back(&r);
  if (usable.size() < 3) throw std::invalid_argument("loocv_calibration: need >= 3 qualifying runs");

  std::vector<double> kappa_folds, vstar_folds;
  for (std::size_t leave = 0; leave < usable.size(); ++leave) {
    std::vector<double> kappas, v_stars;
    for (std::size_t i = 0; i < usable.size(); ++i) {
      if (i == leave) continue;
      kappas.push_back(usable[i]->kappa->kappa_ll);
      v_stars.push_back(usable[i]->crossing->v_star);
    }
    kappa_folds.push_back(median_of(kappas));
    vstar_folds.push_back(median_of(v_stars));
  }
  auto spread_pct = [](const std::vector<double>& folds) {
    const double m = mean_of(folds);
    const auto [lo, hi] = std::minmax_element(folds.begin(), folds.end());
    return m != 0.0 ? 100.0 * (*hi - *lo) / m : 0.0;
  };
  return {spread_pct(vstar_folds), spread_pct(kappa_folds), static_cast<int>(usable.size())};
}

std::vector<RatioStability> ratio_stability(const std::vector<CellSummary>& cells) {
  std::map<std::string, std::vector<double>> by_arch;
  for (const CellSummary& c : cells)
    if (c.ratio_v_star_over_v_mem) by_arch[c.arch].push_back(*c.ratio_v_star_over_v_mem);

  std::vector<RatioStability> out;
  for (const auto& [arch, ratios] : by_arch) {
    RatioStability rs;
    rs.arch = arch;
    rs.n_cells = static_cast<int>(ratios.size());
    rs.mean = mean_of(ratios);
    rs.stddev = stddev_pop(ratios);
    if (ratios.size() >= 2 && rs.mean != 0.0) rs.cv = rs.stddev / rs.mean;
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    rs.min = *lo;
    rs.max = *hi;
    out.push_back(std::move(rs));
  }
  return out;
}

}  // namespace groklab
