#pragma once

#include <Eigen/Core>
#include <functional>
#include <span>
#include <vector>

namespace groklab {

inline constexpr double kLayerNormEps = 1e-5;

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  int n_points = 0;
  bool zero_variance_y = false;  // R^2 reported as 0 by convention
};

// Ordinary least squares of y on x. Requires n >= 3 and non-degenerate x.
LineFit least_squares_line(std::span<const double> x, std::span<const double> y);

// Numerically safe softmax (max subtraction). Output sums to 1.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

struct CrossEntropyResult {
  double loss = 0.0;            // mean negative log-probability of true class
  Eigen::MatrixXd dlogits;      // gradient wrt logits, same shape
};

// logits: batch x classes, labels in [0, classes).
CrossEntropyResult cross_entropy_loss(const Eigen::MatrixXd& logits,
                                      const Eigen::VectorXi& labels);

Eigen::VectorXd layer_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& gamma,
                           const Eigen::VectorXd& beta, double eps = kLayerNormEps);

// Central differences per coordinate. If coords is non-empty only those
// coordinates are probed and the rest of the result is zero.
Eigen::VectorXd finite_diff_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& theta,
    double h, std::span<const int> coords = {});

}  // namespace groklab
