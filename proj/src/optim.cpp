#include "groklab/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace groklab {

const char* opt_kind_name(OptKind k) { return k == OptKind::adamw ? "adamw" : "sgd_wd"; }

Optimizer::Optimizer(OptKind kind_, Eigen::Index dim, double eta_, double lambda_, double beta1_,
                     double beta2_, double eps_)
    : kind(kind_), eta(eta_), lambda(lambda_), beta1(beta1_), beta2(beta2_), eps(eps_) {
  if (eta <= 0.0) throw std::invalid_argument("Optimizer: eta must be positive");
  if (lambda < 0.0) throw std::invalid_argument("Optimizer: lambda must be non-negative");
  if (eta * lambda >= 1.0) throw std::invalid_argument("Optimizer: requires eta*lambda < 1");
  m = Eigen::VectorXd::Zero(dim);
  v = Eigen::VectorXd::Zero(dim);
}

void adamw_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, Optimizer& opt) {
  if (theta.size() != grad.size() || theta.size() != opt.m.size())
    throw std::invalid_argument("adamw_step: shape mismatch");
  opt.t += 1;
  opt.m = opt.beta1 * opt.m + (1.0 - opt.beta1) * grad;
  opt.v = opt.beta2 * opt.v + (1.0 - opt.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.t));
  const Eigen::ArrayXd m_hat = opt.m.array() / bc1;
  const Eigen::ArrayXd v_hat = opt.v.array() / bc2;
  theta = (1.0 - opt.eta * opt.lambda) * theta -
          opt.eta * (m_hat / (v_hat.sqrt() + opt.eps)).matrix();
}

void sgd_wd_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, Optimizer& opt) {
  if (theta.size() != grad.size()) throw std::invalid_argument("sgd_wd_step: shape mismatch");
  opt.t += 1;
  theta = (1.0 - opt.eta * opt.lambda) * theta - opt.eta * grad;
}

void Optimizer::step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
  if (kind == OptKind::adamw)
    adamw_step(theta, grad, *this);
  else
    sgd_wd_step(theta, grad, *this);
}

}  // namespace groklab
