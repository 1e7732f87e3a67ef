#include "ellipt3d/grid.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "ellipt3d/errors.hpp"

namespace ellipt3d {

bool BoundingCube::contains(const Vec3& p, double slack) const {
  for (int a = 0; a < 3; ++a)
    if (p[a] < lo[a] - slack || p[a] > lo[a] + side + slack) return false;
  return true;
}

SignedDistanceDomain SignedDistanceDomain::ball(double radius, const Vec3& center) {
  if (!(radius > 0)) throw ConfigError("ball radius must be positive");
  SignedDistanceDomain d;
  std::ostringstream os;
  os << "ball(" << radius << ")";
  d.name_ = os.str();
  d.distance_ = [=](const Vec3& p) { return norm(p - center) - radius; };
  d.project_ = [=](const Vec3& p) {
    Vec3 r = p - center;
    double len = norm(r);
    if (len == 0.0) throw ProjectionFailure(p);
    return center + r * (radius / len);
  };
  d.normal_ = [=](const Vec3& p) { return normalized(p - center); };
  d.bounds_ = {center - Vec3{radius, radius, radius}, 2 * radius};
  return d;
}

SignedDistanceDomain SignedDistanceDomain::cube(double side) {
  if (!(side > 0)) throw ConfigError("cube side must be positive");
  const double half = side / 2;
  SignedDistanceDomain d;
  std::ostringstream os;
  os << "cube(" << side << ")";
  d.name_ = os.str();
  d.distance_ = [=](const Vec3& p) {
    Vec3 q{std::abs(p.x) - half, std::abs(p.y) - half, std::abs(p.z) - half};
    Vec3 outside{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
    return norm(outside) + std::min(std::max({q.x, q.y, q.z}), 0.0);
  };
  d.project_ = [=](const Vec3& p) {
    Vec3 r = p;
    bool inside = true;
    for (int a = 0; a < 3; ++a) {
      if (std::abs(p[a]) > half) {
        inside = false;
        r[a] = std::copysign(half, p[a]);
      }
    }
    if (inside) {
      int face = 0;
      for (int a = 1; a < 3; ++a)
        if (std::abs(p[a]) > std::abs(p[face])) face = a;
      r[face] = std::copysign(half, p[face]);
    }
    return r;
  };
  d.normal_ = [=](const Vec3& p) {
    int face = 0;
    for (int a = 1; a < 3; ++a)
      if (std::abs(p[a]) > std::abs(p[face])) face = a;
    Vec3 n;
    n[face] = std::copysign(1.0, p[face]);
    return n;
  };
  // Padded so that every face of the cube crosses lattice cells.
  d.bounds_ = {Vec3{-0.75 * side, -0.75 * side, -0.75 * side}, 1.5 * side};
  return d;
}

SignedDistanceDomain SignedDistanceDomain::from_callback(std::string name, DistanceFn distance,
                                                         BoundingCube bounds) {
  if (!distance) throw ConfigError("signed distance callback is empty");
  if (!(bounds.side > 0)) throw ConfigError("bounding cube side must be positive");
  SignedDistanceDomain d;
  d.name_ = std::move(name);
  d.distance_ = std::move(distance);
  d.bounds_ = bounds;
  return d;
}

namespace {

Vec3 fd_gradient(const SignedDistanceDomain::DistanceFn& f, const Vec3& p, double step) {
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 plus = p, minus = p;
    plus[a] += step;
    minus[a] -= step;
    g[a] = (f(plus) - f(minus)) / (2 * step);
  }
  return g;
}

}  // namespace

Vec3 SignedDistanceDomain::project(const Vec3& p, double fd_step) const {
  if (project_) return project_(p);
  const double tol = 1e-10 * diameter();
  Vec3 x = p;
  double dx = distance_(x);
  for (int it = 0; it < 50; ++it) {
    if (std::abs(dx) <= tol) return x;
    Vec3 g = fd_gradient(distance_, x, fd_step);
    double g2 = dot(g, g);
    if (g2 == 0.0) break;
    // Damped step: halve until |distance| decreases.
    double step = 1.0;
    for (int back = 0; back < 30; ++back) {
      Vec3 trial = x - g * (step * dx / g2);
      double dt = distance_(trial);
      if (std::abs(dt) < std::abs(dx)) {
        x = trial;
        dx = dt;
        break;
      }
      step *= 0.5;
    }
  }
  if (std::abs(dx) <= tol) return x;
  throw ProjectionFailure(p);
}

Vec3 SignedDistanceDomain::outward_normal(const Vec3& boundary_point, double fd_step) const {
  if (normal_) return normal_(boundary_point);
  return normalized(fd_gradient(distance_, boundary_point, fd_step));
}

SignedDistanceDomain parse_domain(std::string_view spec) {
  while (!spec.empty() && std::isspace(static_cast<unsigned char>(spec.front()))) spec.remove_prefix(1);
  while (!spec.empty() && std::isspace(static_cast<unsigned char>(spec.back()))) spec.remove_suffix(1);
  auto open = spec.find('(');
  auto close = spec.rfind(')');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open)
    throw ConfigError("domain must look like ball(r) or cube(s): '" + std::string(spec) + "'");
  std::string kind(spec.substr(0, open));
  std::string arg(spec.substr(open + 1, close - open - 1));
  double value = 0.0;
  try {
    std::size_t used = 0;
    value = std::stod(arg, &used);
    if (used != arg.size()) throw std::invalid_argument(arg);
  } catch (const std::exception&) {
    throw ConfigError("bad domain argument '" + arg + "'");
  }
  if (!(value > 0) || !std::isfinite(value)) throw ConfigError("domain size must be positive");
  if (kind == "ball") return SignedDistanceDomain::ball(value);
  if (kind == "cube") return SignedDistanceDomain::cube(value);
  throw ConfigError("unknown domain '" + kind + "'");
}

GridParams GridParams::for_lattice(int n, double side) {
  if (n < 4) throw ConfigError("lattice count n must be at least 4");
  GridParams p;
  p.n = n;
  p.side = side;
  p.h = side / n;
  p.n_boundary = std::max(2, static_cast<int>(std::lround(std::pow(double(n), 0.25))));
  p.h_boundary = p.h / p.n_boundary;
  p.delta = p.h / 2;
  // sqrt(h) only makes sense for a unit reference length.
  p.epsilon = side * std::sqrt(p.h / side);
  return p;
}

int GridParams::stencil_width() const {
  return static_cast<int>(std::floor(epsilon / h + 1e-12));
}

namespace {

Vec3 node_position(const BoundingCube& c, double h, const IVec3& ijk) {
  return c.lo + Vec3{ijk.x * h, ijk.y * h, ijk.z * h};
}

}  // namespace

std::vector<IVec3> build_interior(const SignedDistanceDomain& domain, int n) {
  const GridParams params = GridParams::for_lattice(n, domain.bounding_cube().side);
  std::vector<IVec3> out;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j)
      for (int k = 0; k <= n; ++k) {
        Vec3 x = node_position(domain.bounding_cube(), params.h, {i, j, k});
        if (domain.distance(x) + params.delta < 0) out.push_back({i, j, k});
      }
  if (out.empty()) throw DomainTooSmall(n, params.delta);
  return out;
}

std::vector<IVec3> find_boundary_cubes(const SignedDistanceDomain& domain, int n) {
  const GridParams params = GridParams::for_lattice(n, domain.bounding_cube().side);
  const int m = n + 1;
  std::vector<signed char> sign(static_cast<std::size_t>(m) * m * m);
  auto at = [m](int i, int j, int k) { return (static_cast<std::size_t>(i) * m + j) * m + k; };
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k) {
        double g = domain.distance(node_position(domain.bounding_cube(), params.h, {i, j, k}));
        sign[at(i, j, k)] = g < 0 ? -1 : (g > 0 ? 1 : 0);
      }
  std::vector<IVec3> cubes;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        bool neg = false, pos = false;
        for (int c = 0; c < 8; ++c) {
          signed char s = sign[at(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1))];
          neg |= s < 0;
          pos |= s > 0;
        }
        if (neg && pos) cubes.push_back({i, j, k});
      }
  return cubes;
}

std::vector<BoundaryPoint> sample_boundary_points(const SignedDistanceDomain& domain,
                                                  const IVec3& cube, const GridParams& params) {
  std::vector<BoundaryPoint> out;
  const Vec3 corner = node_position(domain.bounding_cube(), params.h, cube);
  const double hb = params.h_boundary;
  const double fd_step = hb / 10;
  for (int a = 0; a <= params.n_boundary; ++a)
    for (int b = 0; b <= params.n_boundary; ++b)
      for (int c = 0; c <= params.n_boundary; ++c) {
        Vec3 x = corner + Vec3{a * hb, b * hb, c * hb};
        if (std::abs(domain.distance(x)) >= hb / 2) continue;
        Vec3 p = domain.project(x, fd_step);
        out.push_back({p, domain.outward_normal(p, fd_step), cube});
      }
  return out;
}

PointCloud::PointCloud(const SignedDistanceDomain& domain, GridParams params,
                       std::vector<IVec3> interior, std::vector<BoundaryPoint> boundary)
    : params_(params), bounds_(domain.bounding_cube()), lattice_(std::move(interior)) {
  const int m = params_.n + 1;
  lattice_lookup_.assign(static_cast<std::size_t>(m) * m * m, -1);
  positions_.reserve(lattice_.size() + boundary.size());
  for (std::size_t id = 0; id < lattice_.size(); ++id) {
    const IVec3& ijk = lattice_[id];
    std::size_t slot = (static_cast<std::size_t>(ijk.x) * m + ijk.y) * m + ijk.z;
    if (lattice_lookup_[slot] != -1) throw Error("duplicate interior lattice index");
    lattice_lookup_[slot] = static_cast<NodeId>(id);
    positions_.push_back(lattice_point(ijk));
  }
  for (auto& b : boundary) {
    positions_.push_back(b.position);
    normals_.push_back(b.normal);
    cubes_.push_back(b.cube);
  }

  cells_ = m;
  cell_size_ = params_.h;
  const std::size_t ncell = static_cast<std::size_t>(cells_) * cells_ * cells_;
  std::vector<std::uint32_t> counts(ncell + 1, 0);
  auto cell_index = [&](const Vec3& p) {
    return (static_cast<std::size_t>(cell_of(p.x, 0)) * cells_ + cell_of(p.y, 1)) * cells_ +
           cell_of(p.z, 2);
  };
  for (const auto& p : positions_) ++counts[cell_index(p) + 1];
  for (std::size_t c = 0; c < ncell; ++c) counts[c + 1] += counts[c];
  cell_start_ = counts;
  cell_nodes_.resize(positions_.size());
  for (std::size_t id = 0; id < positions_.size(); ++id)
    cell_nodes_[counts[cell_index(positions_[id])]++] = static_cast<NodeId>(id);
}

int PointCloud::cell_of(double coord, int axis) const {
  double t = (coord - bounds_.lo[axis]) / cell_size_;
  if (!(t > 0)) return 0;
  int c = static_cast<int>(t);
  return std::min(c, cells_ - 1);
}

Vec3 PointCloud::lattice_point(const IVec3& ijk) const {
  return node_position(bounds_, params_.h, ijk);
}

std::optional<NodeId> PointCloud::lattice_node(const IVec3& ijk) const {
  const int m = params_.n + 1;
  if (ijk.x < 0 || ijk.y < 0 || ijk.z < 0 || ijk.x >= m || ijk.y >= m || ijk.z >= m)
    return std::nullopt;
  NodeId id = lattice_lookup_[(static_cast<std::size_t>(ijk.x) * m + ijk.y) * m + ijk.z];
  if (id < 0) return std::nullopt;
  return id;
}

std::vector<NodeId> PointCloud::within(const Vec3& q, double r) const {
  std::vector<NodeId> out;
  for_each_within(q, r, [&](NodeId id) { out.push_back(id); });
  std::sort(out.begin(), out.end());
  return out;
}

PointCloud assemble_point_cloud(const SignedDistanceDomain& domain, int n) {
  GridParams params = GridParams::for_lattice(n, domain.bounding_cube().side);
  std::vector<IVec3> interior = build_interior(domain, n);

  // Merge boundary points closer than h_B / 4 (first one wins).
  const double merge = params.h_boundary / 4;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets;
  auto key = [&](long long i, long long j, long long k) {
    const std::uint64_t off = 1u << 20;
    return ((std::uint64_t(i + off) & 0x1FFFFF) << 42) | ((std::uint64_t(j + off) & 0x1FFFFF) << 21) |
           (std::uint64_t(k + off) & 0x1FFFFF);
  };
  const Vec3 lo = domain.bounding_cube().lo;
  std::vector<BoundaryPoint> boundary;
  for (const IVec3& cube : find_boundary_cubes(domain, n)) {
    for (BoundaryPoint& b : sample_boundary_points(domain, cube, params)) {
      long long ci = std::llround(std::floor((b.position.x - lo.x) / merge));
      long long cj = std::llround(std::floor((b.position.y - lo.y) / merge));
      long long ck = std::llround(std::floor((b.position.z - lo.z) / merge));
      bool duplicate = false;
      for (int di = -1; di <= 1 && !duplicate; ++di)
        for (int dj = -1; dj <= 1 && !duplicate; ++dj)
          for (int dk = -1; dk <= 1 && !duplicate; ++dk) {
            auto it = buckets.find(key(ci + di, cj + dj, ck + dk));
            if (it == buckets.end()) continue;
            for (std::size_t other : it->second)
              if (norm(boundary[other].position - b.position) < merge) {
                duplicate = true;
                break;
              }
          }
      if (duplicate) continue;
      buckets[key(ci, cj, ck)].push_back(boundary.size());
      boundary.push_back(b);
    }
  }
  return PointCloud(domain, params, std::move(interior), std::move(boundary));
}

void write_cloud(const PointCloud& cloud, std::ostream& os) {
  const auto& p = cloud.params();
  os << "# ellipt3d-cloud v1 n=" << p.n << " nB=" << p.n_boundary << '\n';
  os << std::setprecision(17);
  for (std::size_t id = 0; id < cloud.size(); ++id) {
    const Vec3& x = cloud.position(static_cast<NodeId>(id));
    if (!cloud.is_boundary(static_cast<NodeId>(id))) {
      os << "I " << x.x << ' ' << x.y << ' ' << x.z << '\n';
    } else {
      const Vec3& nv = cloud.normal(static_cast<NodeId>(id));
      os << "B " << x.x << ' ' << x.y << ' ' << x.z << ' ' << nv.x << ' ' << nv.y << ' ' << nv.z
         << '\n';
    }
  }
}

}  // namespace ellipt3d
