#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "groklab/tasks.hpp"

namespace groklab {

enum class Arch { transformer1, transformer2_paper, transformer2_alt, mlp };

enum class Pooling { mean, final_position };

const char* arch_name(Arch a);
std::optional<Arch> arch_from_name(const std::string& name);

struct ModelSpec {
  Arch arch = Arch::transformer1;
  int vocab_size = 0;
  int seq_len = 0;
  int num_classes = 0;
  int embed_dim = 128;
  int heads = 4;
  int ff_dim = 512;
  Pooling pooling = Pooling::mean;   // readout for transformer1; 2-layer variants mean-pool
  int homogeneity_degree_k = 1;      // metadata for radial-scaling diagnostics

  // Fills arch-dependent defaults (homogeneity degree, pooling).
  static ModelSpec make(Arch arch, int vocab_size, int seq_len, int num_classes,
                        int embed_dim = 128, int heads = 4, int ff_dim = 512);
};

enum class SlotKind { weight, bias, ln_gain, ln_bias };

struct TensorSlot {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  SlotKind kind = SlotKind::weight;
  Eigen::Index size() const { return rows * cols; }
};

struct ModelState {
  ModelSpec spec;
  Eigen::VectorXd params;  // flat theta; column-major within each slot
  std::vector<TensorSlot> layout;

  Eigen::Index param_count() const { return params.size(); }
  const TensorSlot& slot(const std::string& name) const;
  Eigen::Map<Eigen::MatrixXd> view(const std::string& name);
  Eigen::Map<const Eigen::MatrixXd> view(const std::string& name) const;
};

std::vector<TensorSlot> build_layout(const ModelSpec& spec);

ModelState init_model(const ModelSpec& spec, std::uint64_t seed);

// Logits, one row per example.
Eigen::MatrixXd forward(const ModelState& state, const Eigen::MatrixXi& inputs);

struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

LossGrad loss_and_grad(const ModelState& state, const Eigen::MatrixXi& inputs,
                       const Eigen::VectorXi& labels);

// Reverse pass from an arbitrary logit cotangent; used by the NTK probe.
Eigen::VectorXd backward_from_dlogits(const ModelState& state, const Eigen::MatrixXi& inputs,
                                      const Eigen::MatrixXd& dlogits);

double param_norm_sq(const ModelState& state);

// Angle between two flat parameter vectors, in degrees ([0, 180]).
double angle_between_deg(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct MarginReport {
  double margin = 0.0;     // true-class logit minus best other logit
  bool misclassified = false;  // margin <= 0
};

std::vector<MarginReport> margins(const ModelState& state, const Dataset& ds);

// Accuracy as the fraction of examples with strictly positive margin.
double accuracy(const ModelState& state, const Dataset& ds);

struct NtkProbe {
  double g_sup = 0.0;  // max_x ||grad_theta f(x)_{y*}||_2 over the sampled subset
  int subset_size = 0;
};

NtkProbe ntk_feature_norm_sup(const ModelState& state, const Dataset& ds, int subset_size,
                              std::uint64_t seed);

}  // namespace groklab
