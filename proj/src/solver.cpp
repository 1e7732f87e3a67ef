#include "ellipt3d/solver.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <Eigen/Dense>

#include "ellipt3d/errors.hpp"

namespace ellipt3d {

void SolverConfig::validate() const {
  if (!(tolerance > 0)) throw ConfigError("tolerance must be positive");
  if (max_outer < 1) throw ConfigError("max_outer must be at least 1");
  if (inner_sweeps < 1) throw ConfigError("inner_sweeps must be at least 1");
  if (!(omega > 0 && omega <= 2)) throw ConfigError("omega must lie in (0, 2]");
  if (log_every < 1) throw ConfigError("log_every must be at least 1");
}

NodeId default_pin(const PointCloud& cloud) {
  const BoundingCube& b = cloud.bounds();
  const Vec3 mid = b.lo + Vec3{b.side, b.side, b.side} * 0.5;
  NodeId best = 0;
  double bd = norm(cloud.position(0) - mid);
  for (NodeId i = 1; i < static_cast<NodeId>(cloud.interior_count()); ++i) {
    const double d = norm(cloud.position(i) - mid);
    if (d < bd) bd = d, best = i;
  }
  return best;
}

SolveState initial_state(const DiscreteOperator& op, NodeId pin) {
  SolveState st;
  st.u.assign(op.size(), 0.0);
  for (NodeId i = 0; i < static_cast<NodeId>(op.size()); ++i)
    if (op.scheme(i).kind == SchemeKind::Dirichlet) st.u[static_cast<std::size_t>(i)] = op.local_inverse(i, st.u);
  if (pin >= 0) {
    st.c = 0.0;
    st.pin = pin;
  }
  return st;
}

namespace {

double refresh_all(DiscreteOperator& op, std::span<const double> u, double c) {
  double m = 0.0;
  for (NodeId i = 0; i < static_cast<NodeId>(op.size()); ++i) m = std::max(m, std::abs(op.refresh(i, u, c)));
  return m;
}

void log_line(const SolverConfig& cfg, int k, double r, const std::optional<double>& c) {
  if (!cfg.log || k % cfg.log_every != 0) return;
  std::ostream& os = *cfg.log;
  os << "iter=" << k << " residual=" << r << " c=";
  if (c) os << *c;
  os << '\n';
}

}  // namespace

SolveState solve(DiscreteOperator& op, const SolverConfig& config, std::optional<SolveState> init) {
  config.validate();
  if (!op.complete()) throw ConfigError("operator does not assign a scheme to every node");
  SolveState st = init ? std::move(*init) : initial_state(op);
  if (st.u.size() != op.size()) throw ConfigError("initial state does not match the point cloud");
  const bool eigen = st.pin >= 0;
  if (eigen && !st.c) st.c = 0.0;
  if (eigen && op.has_dirichlet()) throw ConfigError("eigenvalue problems cannot carry Dirichlet nodes");
  st.converged = false;

  const auto n = static_cast<NodeId>(op.size());
  const auto interior = static_cast<NodeId>(op.cloud().interior_count());
  double shift_mass = 0.0;
  if (eigen) {
    for (NodeId i = 0; i < interior; ++i) shift_mass += op.scheme(i).shift;
    if (!(shift_mass != 0.0)) throw ConfigError("eigenvalue problem has no shift term");
  }

  double dc = 0.0;
  for (int outer = 0;; ++outer) {
    const double c = st.c.value_or(0.0);
    const double r = refresh_all(op, st.u, c);
    st.residual_history.push_back(r);
    log_line(config, st.iterations, r, st.c);
    if (r <= config.tolerance && std::abs(dc) <= config.tolerance) {
      st.converged = true;
      break;
    }
    if (outer == config.max_outer) break;
    ++st.iterations;

    for (int s = 0; s < config.inner_sweeps; ++s) {
      if (s % 2 == 0) {
        for (NodeId i = 0; i < n; ++i) st.u[static_cast<std::size_t>(i)] = op.local_inverse(i, st.u, c);
      } else {
        for (NodeId i = n - 1; i >= 0; --i) st.u[static_cast<std::size_t>(i)] = op.local_inverse(i, st.u, c);
      }
    }

    if (eigen) {
      // c solving sum_i (F_i + c s_i) = 0 over the interior, relaxed by omega.
      double sum = 0.0;
      for (NodeId i = 0; i < interior; ++i) sum += op.residual(i, st.u, 0.0);
      const double target = -sum / shift_mass;
      dc = config.omega * (target - c);
      st.c = c + dc;
      const double p = st.u[static_cast<std::size_t>(st.pin)];
      for (double& v : st.u) v -= p;
    }
  }
  return st;
}

SolveState solve_eigenvalue(DiscreteOperator& op, NodeId pin, const SolverConfig& config,
                            std::optional<SolveState> init) {
  if (op.has_dirichlet()) throw ConfigError("eigenvalue problems cannot carry Dirichlet nodes");
  if (pin < 0 || pin >= static_cast<NodeId>(op.size())) throw ConfigError("pin node out of range");
  SolveState st = init ? std::move(*init) : initial_state(op, pin);
  st.pin = pin;
  if (!st.c) st.c = 0.0;
  return solve(op, config, std::move(st));
}

SolveState solve_multilevel(DiscreteOperator& op, const FrameHierarchy& hierarchy, int k_star,
                            const SolverConfig& config, std::optional<SolveState> init,
                            const LevelCallback& on_level) {
  if (k_star < 1 || k_star > hierarchy.k_max)
    throw ConfigError("k_star " + std::to_string(k_star) + " outside the frame hierarchy (kmax=" +
                      std::to_string(hierarchy.k_max) + ")");
  std::vector<NodeId> eigen_nodes;
  for (NodeId i = 0; i < static_cast<NodeId>(op.size()); ++i)
    if (op.scheme(i).kind == SchemeKind::InteriorEigen) eigen_nodes.push_back(i);
  if (eigen_nodes.empty()) throw ConfigError("multilevel solve needs eigen schemes");

  const auto& v1 = hierarchy.level(1).frames;
  for (NodeId i : eigen_nodes) op.set_frames(i, v1);
  SolveState st = solve(op, config, std::move(init));
  int total = st.iterations;
  if (on_level) on_level(1, st);
  for (int k = 1; k < k_star; ++k) {
    const double c = st.c.value_or(0.0);
    for (NodeId i : eigen_nodes) {
      op.refresh(i, st.u, c);
      const NodeScheme& s = op.scheme(i);
      const Frame best = s.frame_axes[s.frozen];
      op.set_frames(i, refine_candidates(hierarchy, k, best));
    }
    st.iterations = 0;
    st = solve(op, config, std::move(st));
    total += st.iterations;
    if (on_level) on_level(k + 1, st);
  }
  st.iterations = total;
  return st;
}

SolveState prolong(const SolveState& coarse, const PointCloud& coarse_cloud, const PointCloud& fine_cloud) {
  if (coarse.u.size() != coarse_cloud.size()) throw ConfigError("coarse state does not match its cloud");
  SolveState out;
  out.c = coarse.c;
  out.u.resize(fine_cloud.size());
  if (coarse.pin >= 0) out.pin = default_pin(fine_cloud);

  const BoundingCube& cb = coarse_cloud.bounds();
  const double hc = coarse_cloud.params().h;
  const int nc = coarse_cloud.params().n;
  auto value = [&](NodeId id) { return coarse.u[static_cast<std::size_t>(id)]; };

  auto nearest = [&](const Vec3& x, std::size_t k) {
    std::vector<NodeId> ids;
    for (double r = hc; ids.size() < k; r *= 1.5) {
      ids = coarse_cloud.within(x, r);
      if (r > 4 * cb.side) break;
    }
    std::sort(ids.begin(), ids.end(), [&](NodeId a, NodeId b) {
      const double da = norm(coarse_cloud.position(a) - x), db = norm(coarse_cloud.position(b) - x);
      return da != db ? da < db : a < b;
    });
    if (ids.size() > k) ids.resize(k);
    return ids;
  };

  for (NodeId i = 0; i < static_cast<NodeId>(fine_cloud.size()); ++i) {
    const Vec3 x = fine_cloud.position(i);
    double& v = out.u[static_cast<std::size_t>(i)];
    const Vec3 t = (x - cb.lo) * (1.0 / hc);
    auto cell = [&](double c) { return std::clamp(static_cast<int>(std::floor(c)), 0, nc - 1); };
    const IVec3 base{cell(t.x), cell(t.y), cell(t.z)};
    double corner[2][2][2];
    bool full = !fine_cloud.is_boundary(i);
    for (int dx = 0; dx < 2 && full; ++dx)
      for (int dy = 0; dy < 2 && full; ++dy)
        for (int dz = 0; dz < 2 && full; ++dz) {
          auto id = coarse_cloud.lattice_node({base.x + dx, base.y + dy, base.z + dz});
          if (!id) full = false;
          else corner[dx][dy][dz] = value(*id);
        }
    if (full) {
      const double fx = t.x - base.x, fy = t.y - base.y, fz = t.z - base.z;
      v = 0.0;
      for (int dx = 0; dx < 2; ++dx)
        for (int dy = 0; dy < 2; ++dy)
          for (int dz = 0; dz < 2; ++dz)
            v += corner[dx][dy][dz] * (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
      continue;
    }
    const auto ids = nearest(x, 10);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(ids.size()), 4);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t r = 0; r < ids.size(); ++r) {
      const Vec3 d = (coarse_cloud.position(ids[r]) - x) * (1.0 / hc);
      m.row(static_cast<Eigen::Index>(r)) << 1.0, d.x, d.y, d.z;
      rhs(static_cast<Eigen::Index>(r)) = value(ids[r]);
    }
    v = ids.size() >= 4 ? m.colPivHouseholderQr().solve(rhs)(0) : value(ids.front());
  }
  if (out.pin >= 0) {
    const double p = out.u[static_cast<std::size_t>(out.pin)];
    for (double& v : out.u) v -= p;
  }
  return out;
}

}  // namespace ellipt3d
