#include "groklab/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <algorithm>
#include <limits>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace groklab {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

struct Metrics {
  double loss = 0.0;
  double acc = 0.0;
};

Metrics eval_metrics(const MatrixXd& logits, const VectorXi& labels) {
  Metrics out;
  const auto batch = logits.rows();
  long correct = 0;
  double loss = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const int y = labels[b];
    const double m = logits.row(b).maxCoeff();
    const double z = ((logits.row(b).array() - m).exp()).sum();
    loss -= (logits(b, y) - m) - std::log(z);
    double best_other = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
      if (j != y) best_other = std::max(best_other, logits(b, j));
    if (logits(b, y) > best_other) ++correct;
  }
  out.loss = loss / static_cast<double>(batch);
  out.acc = static_cast<double>(correct) / static_cast<double>(batch);
  return out;
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// --- checkpoint serialization -------------------------------------------

constexpr char kCkptMagic[8] = {'G', 'R', 'O', 'K', 'C', 'K', 'P', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
}

void write_vec(std::ofstream& out, const VectorXd& v) {
  const std::int64_t n = v.size();
  write_pod(out, n);
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
}

VectorXd read_vec(std::ifstream& in) {
  std::int64_t n = 0;
  read_pod(in, n);
  VectorXd v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint: truncated vector");
  return v;
}

struct TrainerState {
  long step = 0;  // last completed step
  VectorXd theta;
  VectorXd m, v;
  long long opt_t = 0;
  double lambda_current = 0.0;
  std::optional<long> t_mem, t_mem_loss, t95, t99;
  double v_mem = 0.0;
  bool has_ref = false;
  VectorXd theta_ref;
  bool intervention_fired = false;
  double f3_v_ref = 0.0;
  std::optional<long> plateau_at;
  long stop_at = 0;
  std::vector<TrajRow> rows;
};

void write_optional_long(std::ofstream& out, const std::optional<long>& x) {
  const std::uint8_t has = x.has_value() ? 1 : 0;
  write_pod(out, has);
  const std::int64_t v = x.value_or(0);
  write_pod(out, v);
}

std::optional<long> read_optional_long(std::ifstream& in) {
  std::uint8_t has = 0;
  std::int64_t v = 0;
  read_pod(in, has);
  read_pod(in, v);
  if (!has) return std::nullopt;
  return static_cast<long>(v);
}

void save_checkpoint(const std::string& path, const RunConfig& config, const TrainerState& ts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out.write(kCkptMagic, sizeof kCkptMagic);
  const std::uint32_t version = 1;
  write_pod(out, version);
  const std::string canon = canonical_config_string(config);
  const std::uint64_t canon_hash = fnv1a64(canon);
  write_pod(out, canon_hash);
  write_pod(out, static_cast<std::int64_t>(ts.step));
  write_vec(out, ts.theta);
  write_vec(out, ts.m);
  write_vec(out, ts.v);
  write_pod(out, static_cast<std::int64_t>(ts.opt_t));
  write_pod(out, ts.lambda_current);
  write_optional_long(out, ts.t_mem);
  write_optional_long(out, ts.t_mem_loss);
  write_optional_long(out, ts.t95);
  write_optional_long(out, ts.t99);
  write_pod(out, ts.v_mem);
  const std::uint8_t has_ref = ts.has_ref ? 1 : 0;
  write_pod(out, has_ref);
  if (ts.has_ref) write_vec(out, ts.theta_ref);
  const std::uint8_t fired = ts.intervention_fired ? 1 : 0;
  write_pod(out, fired);
  write_pod(out, ts.f3_v_ref);
  write_optional_long(out, ts.plateau_at);
  write_pod(out, static_cast<std::int64_t>(ts.stop_at));
  const std::int64_t n_rows = static_cast<std::int64_t>(ts.rows.size());
  write_pod(out, n_rows);
  for (const TrajRow& r : ts.rows) {
    write_pod(out, static_cast<std::int64_t>(r.step));
    write_pod(out, r.v);
    write_pod(out, r.train_acc);
    write_pod(out, r.val_acc);
    write_pod(out, r.train_loss);
    write_pod(out, r.val_loss);
    write_pod(out, r.wd_coeff);
    write_pod(out, r.cos_to_ref);
    const std::uint8_t has_cos = r.has_cos ? 1 : 0;
    write_pod(out, has_cos);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

TrainerState load_checkpoint(const std::string& path, const RunConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCkptMagic, sizeof magic) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint32_t version = 0;
  read_pod(in, version);
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
  std::uint64_t canon_hash = 0;
  read_pod(in, canon_hash);
  if (canon_hash != fnv1a64(canonical_config_string(config)))
    throw std::runtime_error("checkpoint: config mismatch");
  TrainerState ts;
  std::int64_t step = 0;
  read_pod(in, step);
  ts.step = static_cast<long>(step);
  ts.theta = read_vec(in);
  ts.m = read_vec(in);
  ts.v = read_vec(in);
  std::int64_t opt_t = 0;
  read_pod(in, opt_t);
  ts.opt_t = opt_t;
  read_pod(in, ts.lambda_current);
  ts.t_mem = read_optional_long(in);
  ts.t_mem_loss = read_optional_long(in);
  ts.t95 = read_optional_long(in);
  ts.t99 = read_optional_long(in);
  read_pod(in, ts.v_mem);
  std::uint8_t has_ref = 0;
  read_pod(in, has_ref);
  ts.has_ref = has_ref != 0;
  if (ts.has_ref) ts.theta_ref = read_vec(in);
  std::uint8_t fired = 0;
  read_pod(in, fired);
  ts.intervention_fired = fired != 0;
  read_pod(in, ts.f3_v_ref);
  ts.plateau_at = read_optional_long(in);
  std::int64_t stop_at = 0;
  read_pod(in, stop_at);
  ts.stop_at = static_cast<long>(stop_at);
  std::int64_t n_rows = 0;
  read_pod(in, n_rows);
  ts.rows.resize(static_cast<std::size_t>(n_rows));
  for (TrajRow& r : ts.rows) {
    std::int64_t s = 0;
    read_pod(in, s);
    r.step = static_cast<long>(s);
    read_pod(in, r.v);
    read_pod(in, r.train_acc);
    read_pod(in, r.val_acc);
    read_pod(in, r.train_loss);
    read_pod(in, r.val_loss);
    read_pod(in, r.wd_coeff);
    read_pod(in, r.cos_to_ref);
    std::uint8_t has_cos = 0;
    read_pod(in, has_cos);
    r.has_cos = has_cos != 0;
  }
  return ts;
}

}  // namespace

const char* intervention_name(Intervention i) {
  switch (i) {
    case Intervention::none: return "none";
    case Intervention::rescale: return "rescale";
    case Intervention::norm_freeze: return "norm_freeze";
    case Intervention::wd_freeze: return "wd_freeze";
  }
  return "?";
}

std::optional<Intervention> intervention_from_name(const std::string& name) {
  for (Intervention i : {Intervention::none, Intervention::rescale, Intervention::norm_freeze,
                         Intervention::wd_freeze})
    if (name == intervention_name(i)) return i;
  return std::nullopt;
}

void RunConfig::validate() const {
  if (log_every < 1) throw std::invalid_argument("RunConfig: log_every >= 1 required");
  if (max_steps < log_every || max_steps % log_every != 0)
    throw std::invalid_argument("RunConfig: max_steps must be a positive multiple of log_every");
  if (optim.eta * optim.lambda >= 1.0) throw std::invalid_argument("RunConfig: eta*lambda < 1 required");
  if (task.kind == TaskConfig::Kind::modular) {
    if (!is_prime(task.p) || task.p < 5) throw std::invalid_argument("RunConfig: modular p must be a prime >= 5");
  } else {
    if (task.k < 1 || task.k > task.n) throw std::invalid_argument("RunConfig: parity needs 1 <= k <= n");
  }
  if (arch.embed_dim % arch.heads != 0)
    throw std::invalid_argument("RunConfig: embed_dim must be divisible by heads");
  if (rescale_factor <= 0.0) throw std::invalid_argument("RunConfig: rescale_factor must be positive");
}

double apply_intervention(ModelState& model, Optimizer& opt, Intervention kind,
                          double rescale_factor) {
  switch (kind) {
    case Intervention::none:
      break;
    case Intervention::rescale:
      model.params *= rescale_factor;  // moments m, v untouched
      break;
    case Intervention::norm_freeze:
      break;  // target returned below; the trainer projects after every step
    case Intervention::wd_freeze:
      opt.lambda = 0.0;
      break;
  }
  return param_norm_sq(model);
}

void project_norm(Eigen::VectorXd& theta, double v_ref) {
  const double v = theta.squaredNorm();
  if (v > 0.0) theta *= std::sqrt(v_ref / v);
}

std::optional<long> detect_t_mem(const TrajectoryLog& log, TMemMode mode, double acc_threshold,
                                 double loss_threshold) {
  for (const TrajRow& r : log.rows) {
    if (mode == TMemMode::acc ? r.train_acc >= acc_threshold : r.train_loss < loss_threshold)
      return r.step;
  }
  return std::nullopt;
}

std::optional<long> detect_t_grok(const TrajectoryLog& log, double threshold) {
  for (const TrajRow& r : log.rows)
    if (r.val_acc >= threshold) return r.step;
  return std::nullopt;
}

VPostResult detect_v_post_plateau(const TrajectoryLog& log) {
  const std::optional<long> t_grok = detect_t_grok(log, 0.99);
  if (!t_grok) throw std::runtime_error("no grok, V_post undefined");

  const auto& rows = log.rows;
  std::size_t first_post = 0;
  while (first_post < rows.size() && rows[first_post].step < *t_grok) ++first_post;

  constexpr std::size_t kWindow = 30;
  for (std::size_t end = first_post + kWindow; end <= rows.size(); ++end) {
    if (rows[end - 1].step < *t_grok + 1500) continue;
    double mean = 0.0;
    for (std::size_t i = end - kWindow; i < end; ++i) mean += rows[i].v;
    mean /= kWindow;
    double var = 0.0;
    for (std::size_t i = end - kWindow; i < end; ++i) {
      const double d = rows[i].v - mean;
      var += d * d;
    }
    const double rel_std = std::sqrt(var / kWindow) / mean;
    if (rel_std < 0.01) return {mean, "plateau"};
  }

  const std::size_t tail = std::min<std::size_t>(10, rows.size());
  double mean = 0.0;
  for (std::size_t i = rows.size() - tail; i < rows.size(); ++i) mean += rows[i].v;
  return {mean / static_cast<double>(tail), "tail_fallback"};
}

std::string canonical_config_string(const RunConfig& c) {
  std::string s;
  s += "cell_id=" + c.cell_id;
  if (c.task.kind == TaskConfig::Kind::modular) {
    s += ";task=modular;op=" + std::string(c.task.op == ModOp::add ? "add" : "mult");
    s += ";p=" + std::to_string(c.task.p);
  } else {
    s += ";task=parity;n=" + std::to_string(c.task.n) + ";k=" + std::to_string(c.task.k);
    s += ";num_samples=" + std::to_string(c.task.num_samples);
  }
  s += ";arch=" + std::string(arch_name(c.arch.arch));
  s += ";embed=" + std::to_string(c.arch.embed_dim) + ";heads=" + std::to_string(c.arch.heads);
  s += ";ff=" + std::to_string(c.arch.ff_dim);
  s += ";pool=" + std::string(c.arch.pooling == Pooling::mean ? "mean" : "final");
  s += ";opt=" + std::string(opt_kind_name(c.optim.kind));
  s += ";eta=" + fmt_double(c.optim.eta) + ";lambda=" + fmt_double(c.optim.lambda);
  s += ";beta1=" + fmt_double(c.optim.beta1) + ";beta2=" + fmt_double(c.optim.beta2);
  s += ";eps=" + fmt_double(c.optim.eps);
  s += ";seed=" + std::to_string(c.seed);
  s += ";max_steps=" + std::to_string(c.max_steps) + ";log_every=" + std::to_string(c.log_every);
  s += ";intervention=" + std::string(intervention_name(c.intervention));
  s += ";rescale=" + fmt_double(c.rescale_factor);
  s += ";acc_mem=" + fmt_double(c.acc_mem) + ";acc_grok=" + fmt_double(c.acc_grok);
  s += ";acc_grok_soft=" + fmt_double(c.acc_grok_soft);
  s += ";plateau_extra=" + std::to_string(c.plateau_extra_steps);
  return s;
}

std::string run_id_of(const RunConfig& config) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_config_string(config))));
  return buf;
}

RunResult run_training(const RunConfig& config, const TrainControl& control) {
  config.validate();

  const TrainValSplit split =
      config.task.kind == TaskConfig::Kind::modular
          ? gen_modular(config.task.p, config.task.op, config.seed)
          : gen_sparse_parity(config.task.n, config.task.k, config.task.num_samples, config.seed);

  ModelSpec spec = ModelSpec::make(config.arch.arch, config.task.vocab_size(),
                                   config.task.seq_len(), config.task.num_classes(),
                                   config.arch.embed_dim, config.arch.heads, config.arch.ff_dim);
  spec.pooling = config.arch.pooling;

  ModelState model = init_model(spec, config.seed);
  Optimizer opt(config.optim.kind, model.param_count(), config.optim.eta, config.optim.lambda,
                config.optim.beta1, config.optim.beta2, config.optim.eps);

  TrainerState ts;
  ts.stop_at = config.max_steps;
  ts.lambda_current = opt.lambda;

  RunResult result;
  result.summary.config = config;
  result.summary.run_id = run_id_of(config);
  result.log.eta = config.optim.eta;
  result.log.lambda = config.optim.lambda;
  result.log.log_every = config.log_every;

  if (control.resume_from) {
    ts = load_checkpoint(*control.resume_from, config);
    model.params = ts.theta;
    opt.m = ts.m;
    opt.v = ts.v;
    opt.t = ts.opt_t;
    opt.lambda = ts.lambda_current;
  }

  auto eval_and_log = [&](long step) {
    const MatrixXd train_logits = forward(model, split.train.inputs);
    const MatrixXd val_logits = forward(model, split.val.inputs);
    const Metrics train_m = eval_metrics(train_logits, split.train.labels);
    const Metrics val_m = eval_metrics(val_logits, split.val.labels);

    TrajRow row;
    row.step = step;
    row.v = param_norm_sq(model);
    row.train_acc = train_m.acc;
    row.val_acc = val_m.acc;
    row.train_loss = train_m.loss;
    row.val_loss = val_m.loss;
    row.wd_coeff = opt.lambda;
    if (ts.has_ref) {
      const double denom = model.params.norm() * ts.theta_ref.norm();
      row.cos_to_ref = denom > 0.0 ? model.params.dot(ts.theta_ref) / denom : 0.0;
      row.has_cos = true;
    }
    ts.rows.push_back(row);

    if (!ts.t_mem && train_m.acc >= config.acc_mem) {
      ts.t_mem = step;
      ts.v_mem = row.v;
      ts.theta_ref = model.params;  // snapshot before the intervention mutates theta
      ts.has_ref = true;
      row.cos_to_ref = 1.0;
      row.has_cos = true;
      ts.rows.back() = row;
      if (config.intervention != Intervention::none && !ts.intervention_fired) {
        ts.intervention_fired = true;
        result.summary.intervention_fired_at = step;
        const double v_after = apply_intervention(model, opt, config.intervention, config.rescale_factor);
        ts.f3_v_ref = config.intervention == Intervention::norm_freeze ? row.v : v_after;
        ts.lambda_current = opt.lambda;
      }
    }
    if (!ts.t_mem_loss && train_m.loss < 0.01) ts.t_mem_loss = step;
    if (!ts.t95 && val_m.acc >= config.acc_grok_soft) ts.t95 = step;
    if (!ts.t99 && val_m.acc >= config.acc_grok) ts.t99 = step;

    // Plateau-based early stop: once V settles after grokking there is
    // nothing left to log; run plateau_extra_steps further and stop.
    if (ts.t99 && !ts.plateau_at && ts.rows.size() >= 30 &&
        step >= *ts.t99 + 1500) {
      const std::size_t n = ts.rows.size();
      if (ts.rows[n - 30].step >= *ts.t99) {
        double mean = 0.0;
        for (std::size_t i = n - 30; i < n; ++i) mean += ts.rows[i].v;
        mean /= 30.0;
        double var = 0.0;
        for (std::size_t i = n - 30; i < n; ++i) {
          const double d = ts.rows[i].v - mean;
          var += d * d;
        }
        if (std::sqrt(var / 30.0) / mean < 0.01) {
          ts.plateau_at = step;
          const long target = step + config.plateau_extra_steps;
          const long snapped =
              ((target + config.log_every - 1) / config.log_every) * config.log_every;
          ts.stop_at = std::min(ts.stop_at, snapped);
        }
      }
    }
  };

  if (!control.resume_from) eval_and_log(0);

  bool diverged = false;
  long diverged_step = 0;
  const bool f3_active_kind = config.intervention == Intervention::norm_freeze;

  for (long t = ts.step + 1; t <= ts.stop_at; ++t) {
    const LossGrad lg = loss_and_grad(model, split.train.inputs, split.train.labels);
    if (!std::isfinite(lg.loss)) {
      diverged = true;
      diverged_step = t;
      ts.step = t;
      break;
    }
    opt.step(model.params, lg.grad);
    if (f3_active_kind && ts.intervention_fired) project_norm(model.params, ts.f3_v_ref);
    ts.step = t;

    if (t % config.log_every == 0) {
      eval_and_log(t);
      if (!std::isfinite(ts.rows.back().v)) {
        diverged = true;
        diverged_step = t;
        break;
      }
      if (control.stop_and_checkpoint_at && t >= *control.stop_and_checkpoint_at) {
        ts.theta = model.params;
        ts.m = opt.m;
        ts.v = opt.v;
        ts.opt_t = opt.t;
        ts.lambda_current = opt.lambda;
        save_checkpoint(control.checkpoint_path, config, ts);
        result.log.rows = ts.rows;
        result.summary.completed = false;
        result.summary.steps_run = t;
        return result;
      }
    }
  }

  result.log.rows = ts.rows;
  RunSummary& s = result.summary;
  s.completed = true;
  s.steps_run = ts.step;
  s.t_mem = ts.t_mem;
  s.t_mem_loss = ts.t_mem_loss;
  s.t_grok_95 = ts.t95;
  s.t_grok_99 = ts.t99;
  if (ts.t_mem) s.v_mem = ts.v_mem;
  s.grokked = ts.t99.has_value();
  s.diverged = diverged;
  if (diverged) s.diverged_step = diverged_step;
  if (s.grokked && !diverged) {
    const VPostResult vp = detect_v_post_plateau(result.log);
    s.v_post = vp.v_post;
    s.v_post_method = vp.method;
  }
  if (ts.has_ref) s.alpha_final_deg = angle_between_deg(model.params, ts.theta_ref);
  if (ts.intervention_fired && config.intervention == Intervention::norm_freeze) {
    double mean = 0.0;
    long n = 0;
    for (const TrajRow& r : ts.rows)
      if (r.step > *ts.t_mem) {
        mean += r.v;
        ++n;
      }
    if (n > 1) {
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (const TrajRow& r : ts.rows)
        if (r.step > *ts.t_mem) {
          const double d = r.v - mean;
          var += d * d;
        }
      s.f3_norm_rel_std = std::sqrt(var / static_cast<double>(n)) / mean;
    }
  }
  return result;
}

}  // namespace groklab
