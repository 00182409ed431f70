#pragma once

#include <Eigen/Core>
#include <string>

namespace groklab {

enum class OptKind { adamw, sgd_wd };

const char* opt_kind_name(OptKind k);

// Decoupled-weight-decay optimizers with inspectable state. The decay is
// applied multiplicatively to theta, separate from the gradient-derived term:
//   adamw:  theta' = (1 - eta*lambda) * theta - eta * m_hat / (sqrt(v_hat) + eps)
//   sgd_wd: theta' = (1 - eta*lambda) * theta - eta * grad
struct Optimizer {
  OptKind kind = OptKind::adamw;
  double eta = 1e-3;
  double lambda = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Eigen::VectorXd m;
  Eigen::VectorXd v;  // entries stay >= 0
  long long t = 0;

  Optimizer() = default;
  Optimizer(OptKind kind, Eigen::Index dim, double eta, double lambda, double beta1 = 0.9,
            double beta2 = 0.999, double eps = 1e-8);

  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad);
};

void adamw_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, Optimizer& opt);
void sgd_wd_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, Optimizer& opt);

}  // namespace groklab
