#include "ellipt3d/nnls.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace ellipt3d {

namespace {

Eigen::VectorXd solve_passive(const Eigen::MatrixXd& M, const Eigen::VectorXd& b,
                              const std::vector<int>& passive) {
  Eigen::MatrixXd sub(M.rows(), static_cast<Eigen::Index>(passive.size()));
  for (std::size_t j = 0; j < passive.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = M.col(passive[j]);
  return sub.completeOrthogonalDecomposition().solve(b);
}

}  // namespace

NnlsResult solve_constrained_ls(const NnlsProblem& problem) {
  const bool flip = problem.sign == SignConstraint::Nonpositive;
  const Eigen::MatrixXd M = flip ? Eigen::MatrixXd(-problem.M) : problem.M;
  const Eigen::VectorXd& b = problem.b;
  const Eigen::Index m = M.cols();

  NnlsResult out;
  out.a = Eigen::VectorXd::Zero(m);
  if (m == 0) {
    out.residual = b.norm();
    return out;
  }

  const double tol = 10 * std::numeric_limits<double>::epsilon() *
                     M.cwiseAbs().colwise().sum().maxCoeff() *
                     static_cast<double>(std::max(M.rows(), m));
  std::vector<char> in_passive(static_cast<std::size_t>(m), 0);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd w = M.transpose() * (b - M * x);

  const int max_iter = static_cast<int>(10 * m);
  int iter = 0;
  while (iter < max_iter) {
    Eigen::Index t = -1;
    double best = tol;
    for (Eigen::Index j = 0; j < m; ++j)
      if (!in_passive[static_cast<std::size_t>(j)] && w[j] > best) {
        best = w[j];
        t = j;
      }
    if (t < 0) break;
    in_passive[static_cast<std::size_t>(t)] = 1;

    for (;;) {
      ++iter;
      std::vector<int> passive;
      for (Eigen::Index j = 0; j < m; ++j)
        if (in_passive[static_cast<std::size_t>(j)]) passive.push_back(static_cast<int>(j));
      if (passive.empty()) {
        x.setZero();
        break;
      }
      Eigen::VectorXd zp = solve_passive(M, b, passive);
      bool feasible = true;
      for (Eigen::Index j = 0; j < zp.size(); ++j)
        if (zp[j] <= 0) feasible = false;
      if (feasible) {
        x.setZero();
        for (std::size_t j = 0; j < passive.size(); ++j) x[passive[j]] = zp[static_cast<Eigen::Index>(j)];
        break;
      }
      double alpha = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < passive.size(); ++j) {
        double z = zp[static_cast<Eigen::Index>(j)];
        if (z <= 0) {
          double xj = x[passive[j]];
          alpha = std::min(alpha, xj / (xj - z));
        }
      }
      for (std::size_t j = 0; j < passive.size(); ++j) {
        double z = zp[static_cast<Eigen::Index>(j)];
        double& xj = x[passive[j]];
        xj += alpha * (z - xj);
        if (xj <= tol) {
          xj = 0.0;
          in_passive[static_cast<std::size_t>(passive[j])] = 0;
        }
      }
      if (iter >= max_iter) break;
    }
    w = M.transpose() * (b - M * x);
  }

  for (Eigen::Index j = 0; j < m; ++j) x[j] = std::max(x[j], 0.0);
  out.iterations = iter;
  out.residual = (M * x - b).norm();
  out.a = flip ? Eigen::VectorXd(-x) : x;
  return out;
}

}  // namespace ellipt3d
