#include "ellipt3d/stencil.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <tuple>

#include "ellipt3d/errors.hpp"

namespace ellipt3d {

double apply_stencil(const Stencil& stencil, std::span<const double> u) {
  const double u0 = u[static_cast<std::size_t>(stencil.reference)];
  double s = 0.0;
  for (std::size_t j = 0; j < stencil.neighbors.size(); ++j)
    s += stencil.coefficients[j] * (u[static_cast<std::size_t>(stencil.neighbors[j])] - u0);
  return s;
}

void write_stencil(const Stencil& stencil, std::ostream& os) {
  os << std::setprecision(17) << stencil.reference << ' ' << stencil.direction.x << ' '
     << stencil.direction.y << ' ' << stencil.direction.z;
  for (double a : stencil.coefficients) os << ' ' << a;
  for (NodeId id : stencil.neighbors) os << ' ' << id;
  os << '\n';
}

std::optional<IVec3> lattice_direction(const Vec3& dir, int max_width) {
  const double len = norm(dir);
  if (!(len > 0)) return std::nullopt;
  const Vec3 u = dir / len;
  const double big = std::max({std::abs(u.x), std::abs(u.y), std::abs(u.z)});
  for (int w = 1; w <= max_width; ++w) {
    IVec3 cand{static_cast<int>(std::lround(u.x / big * w)), static_cast<int>(std::lround(u.y / big * w)),
               static_cast<int>(std::lround(u.z / big * w))};
    if (cand == IVec3{}) continue;
    IVec3 p = primitive(cand);
    if (norm_inf(p) > max_width) continue;
    Vec3 pu = unit(p);
    if (norm(cross(pu, u)) <= 1e-12 && dot(pu, u) > 0) return p;
  }
  return std::nullopt;
}

std::optional<Stencil> centered_second_difference(const PointCloud& cloud, NodeId x0,
                                                  const IVec3& nu) {
  if (cloud.is_boundary(x0) || nu == IVec3{}) return std::nullopt;
  const GridParams& p = cloud.params();
  const double len = std::sqrt(static_cast<double>(norm2(nu)));
  if (!(len * p.h < p.epsilon)) return std::nullopt;
  const IVec3& c = cloud.lattice_index(x0);
  auto plus = cloud.lattice_node({c.x + nu.x, c.y + nu.y, c.z + nu.z});
  auto minus = cloud.lattice_node({c.x - nu.x, c.y - nu.y, c.z - nu.z});
  if (!plus || !minus) return std::nullopt;
  const double a = 1.0 / (len * len * p.h * p.h);
  Stencil s;
  s.reference = x0;
  s.neighbors = {*plus, *minus};
  s.coefficients = {a, a};
  s.direction = unit(nu);
  s.kind = StencilKind::SecondDirectional;
  s.angular_error = 0.0;
  return s;
}

namespace {

struct Rotated {
  double x, y, z, r;
};

Rotated rotate(const std::array<Vec3, 3>& frame, const Vec3& d) {
  return {dot(d, frame[0]), dot(d, frame[1]), dot(d, frame[2]), norm(d)};
}

/// Solves the moment system in coordinates scaled by the largest offset and
/// returns physical coefficients; residual is that of the scaled system.
struct MomentSolve {
  std::vector<double> a;
  double residual;
};

MomentSolve solve_second_moments(const std::vector<Rotated>& offsets) {
  double scale = 0.0;
  for (const auto& o : offsets) scale = std::max(scale, o.r);
  const auto m = static_cast<Eigen::Index>(offsets.size());
  NnlsProblem prob;
  prob.M.resize(4, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Rotated& o = offsets[static_cast<std::size_t>(j)];
    const double x = o.x / scale, y = o.y / scale, z = o.z / scale;
    prob.M(0, j) = x;
    prob.M(1, j) = y;
    prob.M(2, j) = z;
    prob.M(3, j) = 0.5 * x * x;
  }
  prob.b = Eigen::Vector4d(0, 0, 0, 1);
  prob.sign = SignConstraint::Nonnegative;
  NnlsResult res = solve_constrained_ls(prob);
  MomentSolve out;
  out.residual = res.residual;
  out.a.resize(offsets.size());
  for (std::size_t j = 0; j < offsets.size(); ++j)
    out.a[j] = res.a[static_cast<Eigen::Index>(j)] / (scale * scale);
  return out;
}

MomentSolve solve_first_moments(const std::vector<Vec3>& offsets, const Vec3& n) {
  double scale = 0.0;
  for (const auto& o : offsets) scale = std::max(scale, norm(o));
  const auto m = static_cast<Eigen::Index>(offsets.size());
  NnlsProblem prob;
  prob.M.resize(3, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (int a = 0; a < 3; ++a) prob.M(a, j) = offsets[static_cast<std::size_t>(j)][a] / scale;
  prob.b = Eigen::Vector3d(n.x, n.y, n.z);
  prob.sign = SignConstraint::Nonpositive;
  NnlsResult res = solve_constrained_ls(prob);
  MomentSolve out;
  out.residual = res.residual;
  out.a.resize(offsets.size());
  for (std::size_t j = 0; j < offsets.size(); ++j)
    out.a[j] = res.a[static_cast<Eigen::Index>(j)] / scale;
  return out;
}

constexpr double kFeasibleTol = 1e-6;

Stencil finish_second(const PointCloud& cloud, NodeId x0, const Vec3& nu,
                      const std::vector<NodeId>& ids, const std::vector<Rotated>& offsets) {
  MomentSolve sol = solve_second_moments(offsets);
  if (sol.residual > kFeasibleTol) throw InfeasibleStencil(x0, sol.residual);
  Stencil s;
  s.reference = x0;
  s.direction = nu;
  s.kind = StencilKind::SecondDirectional;
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (sol.a[j] <= 0.0) continue;
    s.neighbors.push_back(ids[j]);
    s.coefficients.push_back(sol.a[j]);
    const Rotated& o = offsets[j];
    s.angular_error = std::max(s.angular_error, std::acos(std::min(1.0, std::abs(o.x) / o.r)));
  }
  (void)cloud;
  return s;
}

Stencil generalized_second(const PointCloud& cloud, NodeId x0, const Vec3& nu) {
  const auto frame = complete_frame(nu);
  const Vec3 origin = cloud.position(x0);
  const double eps = cloud.params().epsilon;
  const double wide = std::min(2 * eps, cloud.bounds().side * std::sqrt(3.0));

  std::optional<OctantSelection> sel;
  try {
    sel = select_octant_neighbors(cloud, x0, nu, eps);
  } catch (const EmptyOctant&) {
    try {
      sel = select_octant_neighbors(cloud, x0, nu, wide);
    } catch (const EmptyOctant&) {
    }
  }

  std::vector<NodeId> ids;
  if (sel) {
    ids.assign(sel->neighbors.begin(), sel->neighbors.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  } else {
    // No octant structure: all points within the enlarged radius.
    const double tol = 1e-12 * wide;
    for (NodeId id : cloud.within(origin, wide)) {
      if (id == x0) continue;
      if (std::abs(dot(cloud.position(id) - origin, frame[0])) <= tol) continue;
      ids.push_back(id);
    }
  }
  std::vector<Rotated> offsets;
  offsets.reserve(ids.size());
  for (NodeId id : ids) offsets.push_back(rotate(frame, cloud.position(id) - origin));
  return finish_second(cloud, x0, nu, ids, offsets);
}

}  // namespace

OctantSelection select_octant_neighbors(const PointCloud& cloud, NodeId x0, const Vec3& nu,
                                        double radius) {
  const auto frame = complete_frame(normalized(nu));
  const Vec3 origin = cloud.position(x0);
  const double tol = 1e-12 * radius;
  const double inf = std::numeric_limits<double>::infinity();

  struct Best {
    double objective, distance, axis_angle;
    NodeId id;
  };
  std::array<Best, 8> best;
  best.fill({inf, inf, 0.0, -1});

  cloud.for_each_within(origin, radius, [&](NodeId id) {
    if (id == x0) return;
    const Rotated o = rotate(frame, cloud.position(id) - origin);
    if (std::abs(o.x) <= tol) return;
    const double theta = std::atan2(std::abs(o.y), std::abs(o.x));
    const double polar = std::asin(std::min(1.0, std::abs(o.z) / o.r));
    const double objective = theta * theta + polar * polar;
    const int sx = o.x < 0 ? 1 : 0;
    // Points on a transverse plane belong to both adjacent octants.
    const int y_lo = o.y < -tol ? 1 : 0, y_hi = o.y > tol ? 0 : 1;
    const int z_lo = o.z < -tol ? 1 : 0, z_hi = o.z > tol ? 0 : 1;
    for (int sy = y_lo; sy <= y_hi; ++sy)
      for (int sz = z_lo; sz <= z_hi; ++sz) {
        Best& b = best[static_cast<std::size_t>(sx | (sy << 1) | (sz << 2))];
        if (std::tie(objective, o.r, id) < std::tie(b.objective, b.distance, b.id) || b.id < 0) {
          b = {objective, o.r, std::acos(std::min(1.0, std::abs(o.x) / o.r)), id};
        }
      }
  });

  OctantSelection out;
  for (int oct = 0; oct < 8; ++oct) {
    const Best& b = best[static_cast<std::size_t>(oct)];
    if (b.id < 0) throw EmptyOctant(x0, oct);
    out.neighbors[static_cast<std::size_t>(oct)] = b.id;
    out.angular_error = std::max(out.angular_error, b.axis_angle);
  }
  return out;
}

Stencil build_second_directional(const PointCloud& cloud, NodeId x0, const IVec3& nu) {
  if (auto s = centered_second_difference(cloud, x0, primitive(nu))) return *s;
  return generalized_second(cloud, x0, unit(nu));
}

Stencil build_second_directional(const PointCloud& cloud, NodeId x0, const Vec3& nu) {
  const Vec3 u = normalized(nu);
  if (auto lat = lattice_direction(u, cloud.params().stencil_width())) {
    if (auto s = centered_second_difference(cloud, x0, *lat)) {
      s->direction = u;
      return *s;
    }
  }
  return generalized_second(cloud, x0, u);
}

namespace {

std::optional<Stencil> try_first(const PointCloud& cloud, NodeId x0, const Vec3& n,
                                 const std::vector<NodeId>& ids) {
  const Vec3 origin = cloud.position(x0);
  std::vector<Vec3> offsets;
  for (NodeId id : ids) offsets.push_back(cloud.position(id) - origin);
  MomentSolve sol = solve_first_moments(offsets, n);
  if (sol.residual > kFeasibleTol) return std::nullopt;
  Stencil s;
  s.reference = x0;
  s.direction = n;
  s.kind = StencilKind::FirstDirectional;
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (sol.a[j] >= 0.0) continue;
    s.neighbors.push_back(ids[j]);
    s.coefficients.push_back(sol.a[j]);
    s.angular_error = std::max(s.angular_error, line_angle(offsets[j], n));
  }
  return s;
}

bool within_reach(const PointCloud& cloud, NodeId x0, const Stencil& s) {
  const double reach = 2 * cloud.params().h * (1 + 1e-12);
  for (NodeId id : s.neighbors)
    if (norm(cloud.position(id) - cloud.position(x0)) > reach) return false;
  return true;
}

/// All interior nodes within 2h of x0, when the entry face reaches further.
std::optional<Stencil> reach_limited(const PointCloud& cloud, NodeId x0, const Vec3& n) {
  std::vector<NodeId> ids;
  cloud.for_each_within(cloud.position(x0), 2 * cloud.params().h, [&](NodeId id) {
    if (!cloud.is_boundary(id)) ids.push_back(id);
  });
  if (ids.size() < 3) return std::nullopt;
  std::sort(ids.begin(), ids.end());
  return try_first(cloud, x0, n, ids);
}

}  // namespace

Stencil build_first_directional_boundary(const PointCloud& cloud, NodeId x0, const Vec3& n_dir) {
  const Vec3 n = normalized(n_dir);
  const Vec3 p0 = cloud.position(x0);
  const Vec3 dir = -n;
  const BoundingCube& box = cloud.bounds();
  const double h = cloud.params().h;
  const int cells = cloud.params().n;

  // Lattice-plane crossings of the ray, visited in increasing t.
  int next[3];
  int step[3];
  double t_next[3];
  const double inf = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double s = (p0[a] - box.lo[a]) / h;
    const double rs = std::round(s);
    const bool on_plane = std::abs(s - rs) < 1e-9;
    if (dir[a] > 0) {
      step[a] = 1;
      next[a] = on_plane ? static_cast<int>(rs) + 1 : static_cast<int>(std::floor(s)) + 1;
    } else if (dir[a] < 0) {
      step[a] = -1;
      next[a] = on_plane ? static_cast<int>(rs) - 1 : static_cast<int>(std::ceil(s)) - 1;
    } else {
      step[a] = 0;
      next[a] = 0;
      t_next[a] = inf;
      continue;
    }
    t_next[a] = (box.lo[a] + next[a] * h - p0[a]) / dir[a];
  }

  auto clamp_cell = [cells](double v) {
    int c = static_cast<int>(std::floor(v + 1e-12));
    return std::clamp(c, 0, cells - 1);
  };

  for (;;) {
    int a = 0;
    if (t_next[1] < t_next[a]) a = 1;
    if (t_next[2] < t_next[a]) a = 2;
    const double t = t_next[a];
    if (!std::isfinite(t) || next[a] < 0 || next[a] > cells) throw RayEscaped(x0);
    const Vec3 q = p0 + dir * t;
    if (!box.contains(q, 1e-9 * h)) throw RayEscaped(x0);

    const int b = (a + 1) % 3, c = (a + 2) % 3;
    const int jb = clamp_cell((q[b] - box.lo[b]) / h);
    const int jc = clamp_cell((q[c] - box.lo[c]) / h);
    std::vector<NodeId> verts;
    int present = 0;
    for (int db = 0; db <= 1; ++db)
      for (int dc = 0; dc <= 1; ++dc) {
        int idx[3];
        idx[a] = next[a];
        idx[b] = jb + db;
        idx[c] = jc + dc;
        if (auto id = cloud.lattice_node({idx[0], idx[1], idx[2]})) {
          verts.push_back(*id);
          ++present;
        }
      }
    auto accept = [&](const Stencil& s) {
      if (within_reach(cloud, x0, s)) return s;
      if (auto r = reach_limited(cloud, x0, n)) return *r;
      return s;
    };
    if (present == 4) {
      if (auto s = try_first(cloud, x0, n, verts)) return accept(*s);
    } else if (present > 0) {
      int idx[3];
      idx[a] = next[a];
      idx[b] = jb;
      idx[c] = jc;
      Vec3 center = cloud.lattice_point({idx[0], idx[1], idx[2]});
      center[b] += h / 2;
      center[c] += h / 2;
      std::vector<std::pair<double, NodeId>> near;
      cloud.for_each_within(center, 2 * h, [&](NodeId id) {
        if (!cloud.is_boundary(id)) near.emplace_back(norm(cloud.position(id) - center), id);
      });
      std::sort(near.begin(), near.end());
      if (near.size() >= 4) {
        std::vector<NodeId> ids;
        for (std::size_t k = 0; k < 4; ++k) ids.push_back(near[k].second);
        if (auto s = try_first(cloud, x0, n, ids)) return accept(*s);
      }
    }
    next[a] += step[a];
    t_next[a] = (box.lo[a] + next[a] * h - p0[a]) / dir[a];
  }
}

StencilTable::Id StencilTable::add(const Stencil& s) {
  const Id id = static_cast<Id>(reference_.size());
  double w = 0.0;
  for (std::size_t j = 0; j < s.neighbors.size(); ++j) {
    ids_.push_back(s.neighbors[j]);
    coef_.push_back(s.coefficients[j]);
    w += s.coefficients[j];
  }
  start_.push_back(static_cast<std::uint32_t>(ids_.size()));
  reference_.push_back(s.reference);
  weight_.push_back(w);
  angle_.push_back(s.angular_error);
  return id;
}

}  // namespace ellipt3d
