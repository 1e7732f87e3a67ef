#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "ellipt3d/frames.hpp"
#include "ellipt3d/operators.hpp"

namespace ellipt3d {

struct SolverConfig {
  double tolerance = 1e-8;  ///< max-norm residual
  int max_outer = 5000;
  int inner_sweeps = 10;
  double omega = 1.0;  ///< relaxation of the eigenvalue update
  std::ostream* log = nullptr;
  int log_every = 1;

  void validate() const;
};

struct SolveState {
  std::vector<double> u;
  std::optional<double> c;
  std::vector<double> residual_history;
  bool converged = false;
  int iterations = 0;  ///< outer iterations, summed over levels
  NodeId pin = -1;
};

/// Interior node nearest the centre of the bounding cube.
NodeId default_pin(const PointCloud& cloud);

/// u = 0 at interior nodes, boundary data at Dirichlet nodes, c = 0 when pinned.
SolveState initial_state(const DiscreteOperator& op, NodeId pin = -1);

/// Alternates an argmax refresh of every node with `inner_sweeps`
/// Gauss-Seidel sweeps (forward, then backward). When init carries a pin,
/// the eigenvalue c is updated after each block and u(pin) is reset to 0.
SolveState solve(DiscreteOperator& op, const SolverConfig& config,
                 std::optional<SolveState> init = std::nullopt);

/// Eigenvalue problem: interior residuals F^h + c s with u(pin) = 0.
/// Throws ConfigError when a Dirichlet node is present.
SolveState solve_eigenvalue(DiscreteOperator& op, NodeId pin, const SolverConfig& config,
                            std::optional<SolveState> init = std::nullopt);

using LevelCallback = std::function<void(int level, const SolveState&)>;

/// Level 1 over V_1, then per-node refinement through the alignment maps up
/// to k_star, each level warm-started from the last.
SolveState solve_multilevel(DiscreteOperator& op, const FrameHierarchy& hierarchy, int k_star,
                            const SolverConfig& config, std::optional<SolveState> init = std::nullopt,
                            const LevelCallback& on_level = {});

/// Trilinear interpolation from the coarse lattice where the whole coarse
/// cell is present, otherwise (and at boundary nodes) an affine
/// least-squares fit to the ten nearest coarse nodes.
SolveState prolong(const SolveState& coarse, const PointCloud& coarse_cloud, const PointCloud& fine_cloud);

}  // namespace ellipt3d
