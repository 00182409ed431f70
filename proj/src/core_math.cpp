#include "groklab/core_math.hpp"

#include <cmath>
#include <stdexcept>

namespace groklab {

LineFit least_squares_line(std::span<const double> x, std::span<const double> y) {
  const int n = static_cast<int>(x.size());
  if (n < 3 || y.size() != x.size()) throw std::invalid_argument("least_squares_line: need n >= 3 matched points");

  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
  mx /= n;
  my /= n;

  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw std::invalid_argument("degenerate abscissa");

  LineFit fit;
  fit.n_points = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (syy == 0.0) {
    fit.r_squared = 0.0;
    fit.zero_variance_y = true;
  } else {
    fit.r_squared = (sxy * sxy) / (sxx * syy);
  }
  return fit;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

CrossEntropyResult cross_entropy_loss(const Eigen::MatrixXd& logits,
                                      const Eigen::VectorXi& labels) {
  const auto batch = logits.rows();
  const auto classes = logits.cols();
  if (labels.size() != batch) throw std::invalid_argument("cross_entropy_loss: label count mismatch");

  CrossEntropyResult out;
  out.dlogits.resize(batch, classes);
  double loss = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const int y = labels[b];
    if (y < 0 || y >= classes) throw std::invalid_argument("cross_entropy_loss: label out of range");
    const double m = logits.row(b).maxCoeff();
    const Eigen::ArrayXd e = (logits.row(b).transpose().array() - m).exp();
    const double z = e.sum();
    loss -= (logits(b, y) - m) - std::log(z);
    out.dlogits.row(b) = (e / z).matrix().transpose();
    out.dlogits(b, y) -= 1.0;
  }
  out.loss = loss / static_cast<double>(batch);
  out.dlogits /= static_cast<double>(batch);
  return out;
}

Eigen::VectorXd layer_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& gamma,
                           const Eigen::VectorXd& beta, double eps) {
  const auto n = x.size();
  if (n < 2 || gamma.size() != n || beta.size() != n) throw std::invalid_argument("layer_norm: size mismatch");
  const double mean = x.mean();
  const double var = (x.array() - mean).square().sum() / static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + eps);
  return (gamma.array() * ((x.array() - mean) * inv) + beta.array()).matrix();
}

Eigen::VectorXd finite_diff_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& theta,
    double h, std::span<const int> coords) {
  if (h <= 0.0) throw std::invalid_argument("finite_diff_gradient: h must be positive");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd probe = theta;
  auto probe_coord = [&](int i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    grad[i] = (fp - fm) / (2.0 * h);
  };
  if (coords.empty()) {
    for (int i = 0; i < theta.size(); ++i) probe_coord(i);
  } else {
    for (int i : coords) probe_coord(i);
  }
  return grad;
}

}  // namespace groklab
