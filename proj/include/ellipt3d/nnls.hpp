#pragma once

#include <Eigen/Dense>

namespace ellipt3d {

enum class SignConstraint { Nonnegative, Nonpositive };

/// minimize 1/2 |M a - b|^2 subject to a >= 0 (or a <= 0).
struct NnlsProblem {
  Eigen::MatrixXd M;
  Eigen::VectorXd b;
  SignConstraint sign = SignConstraint::Nonnegative;
};

struct NnlsResult {
  Eigen::VectorXd a;
  double residual = 0.0;  ///< |M a - b|_2
  int iterations = 0;
};

/// Lawson-Hanson active-set solve. The sign constraint holds exactly on
/// return; ties in the entering index go to the lowest column, and the
/// outer loop is capped at 10 m iterations.
NnlsResult solve_constrained_ls(const NnlsProblem& problem);

}  // namespace ellipt3d
