#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "groklab/models.hpp"
#include "groklab/optim.hpp"
#include "groklab/tasks.hpp"

namespace groklab {

struct TaskConfig {
  enum class Kind { modular, parity };
  Kind kind = Kind::modular;
  ModOp op = ModOp::add;
  int p = 97;
  int n = 20;
  int k = 3;
  int num_samples = 4096;

  int vocab_size() const { return kind == Kind::modular ? p : 2; }
  int seq_len() const { return kind == Kind::modular ? 2 : n; }
  int num_classes() const { return kind == Kind::modular ? p : 2; }
};

struct ArchConfig {
  Arch arch = Arch::transformer1;
  int embed_dim = 128;
  int heads = 4;
  int ff_dim = 512;
  Pooling pooling = Pooling::mean;
};

struct OptimConfig {
  OptKind kind = OptKind::adamw;
  double eta = 1e-3;
  double lambda = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

enum class Intervention { none, rescale, norm_freeze, wd_freeze };

const char* intervention_name(Intervention i);
std::optional<Intervention> intervention_from_name(const std::string& name);

struct RunConfig {
  std::string cell_id = "cell";
  TaskConfig task;
  ArchConfig arch;
  OptimConfig optim;
  std::uint64_t seed = 42;
  long max_steps = 10000;
  int log_every = 20;
  Intervention intervention = Intervention::none;
  double rescale_factor = 0.9;
  double acc_mem = 0.99;
  double acc_grok = 0.99;
  double acc_grok_soft = 0.95;
  long plateau_extra_steps = 2000;  // early stop this many steps after a plateau

  void validate() const;  // throws on bad configuration
};

struct TrajRow {
  long step = 0;
  double v = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wd_coeff = 0.0;
  double cos_to_ref = 0.0;  // meaningful only when has_cos
  bool has_cos = false;     // absent before the memorisation snapshot exists
};

struct TrajectoryLog {
  double eta = 0.0;
  double lambda = 0.0;
  int log_every = 20;
  std::vector<TrajRow> rows;
};

struct RunSummary {
  RunConfig config;
  std::string run_id;
  long steps_run = 0;
  bool completed = false;  // false for a checkpoint-interrupted partial run
  std::optional<long> t_mem;
  std::optional<long> t_mem_loss;
  std::optional<long> t_grok_95;
  std::optional<long> t_grok_99;
  std::optional<double> v_mem;
  std::optional<double> v_post;
  std::string v_post_method;  // "plateau" | "tail_fallback" | ""
  bool grokked = false;
  bool diverged = false;
  std::optional<long> diverged_step;
  std::optional<double> alpha_final_deg;
  std::optional<long> intervention_fired_at;
  std::optional<double> f3_norm_rel_std;  // rel std of logged V after the freeze
};

struct RunResult {
  TrajectoryLog log;
  RunSummary summary;
};

struct TrainControl {
  // Stop at this logged step and write a checkpoint (for resume tests).
  std::optional<long> stop_and_checkpoint_at;
  std::string checkpoint_path;
  std::optional<std::string> resume_from;
};

RunResult run_training(const RunConfig& config, const TrainControl& control = {});

enum class TMemMode { acc, loss };

std::optional<long> detect_t_mem(const TrajectoryLog& log, TMemMode mode, double acc_threshold = 0.99,
                                 double loss_threshold = 0.01);
std::optional<long> detect_t_grok(const TrajectoryLog& log, double threshold);

struct VPostResult {
  double v_post = 0.0;
  std::string method;  // "plateau" | "tail_fallback"
};

// First 30-logged-point window after T_grok with rel std < 1%, ending at
// least 1500 steps past T_grok; falls back to the mean of the last 10 points.
VPostResult detect_v_post_plateau(const TrajectoryLog& log);

// One-shot part of an intervention at its trigger. Returns the V value the
// norm-freeze projection must hold (current V for the other kinds).
double apply_intervention(ModelState& model, Optimizer& opt, Intervention kind,
                          double rescale_factor = 0.9);

// Per-step projection used by norm_freeze: theta <- theta * sqrt(v_ref / |theta|^2).
void project_norm(Eigen::VectorXd& theta, double v_ref);

std::string canonical_config_string(const RunConfig& config);
std::string run_id_of(const RunConfig& config);

}  // namespace groklab
