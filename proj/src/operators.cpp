#include "ellipt3d/operators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "ellipt3d/errors.hpp"

namespace ellipt3d {

namespace {

constexpr double kSigma = 1e-12;

// exp of the clamped log: d above sigma, tangent-line extension of log below.
double ma_psi(double d) { return d >= kSigma ? d : kSigma * std::exp((d - kSigma) / kSigma); }
double ma_dpsi(double d) { return d >= kSigma ? 1.0 : std::exp((d - kSigma) / kSigma); }

double atan_phi(double d) { return d > 0 ? std::atan(d) : d; }
double atan_dphi(double d) { return d > 0 ? 1.0 / (1.0 + d * d) : 1.0; }

EigenTerm identity_term() {
  return {[](double x) { return x; }, [](double) { return 1.0; }, [](double s) { return -s; },
          [](double) { return -1.0; }};
}

}  // namespace

EigenFunctionSpec EigenFunctionSpec::laplacian(FieldFn source) {
  EigenFunctionSpec s;
  s.family = Family::Laplacian;
  s.main = identity_term();
  s.source = std::move(source);
  return s;
}

EigenFunctionSpec EigenFunctionSpec::monge_ampere(FieldFn source) {
  EigenFunctionSpec s;
  s.family = Family::MongeAmpere;
  s.main = {[](double x) { return std::log(ma_psi(x)); },
            [](double x) { return x >= kSigma ? 1.0 / x : 1.0 / kSigma; },
            [](double t) { return -std::exp(t); }, [](double t) { return -std::exp(t); }};
  s.addend = EigenTerm{[](double x) { return std::min(x, 0.0); },
                       [](double x) { return x < 0 ? 1.0 : 0.0; }, [](double t) { return -t; },
                       [](double) { return -1.0; }};
  s.source = std::move(source);
  return s;
}

EigenFunctionSpec EigenFunctionSpec::minimal_lagrangian(FieldFn source) {
  EigenFunctionSpec s;
  s.family = Family::MinimalLagrangian;
  s.main = {atan_phi, atan_dphi, [](double t) { return -t; }, [](double) { return -1.0; }};
  s.source = std::move(source);
  return s;
}

double EigenFunctionSpec::evaluate(const std::array<double, 3>& d) const {
  switch (family) {
    case Family::Laplacian:
      return -(d[0] + d[1] + d[2]);
    case Family::MongeAmpere:
      return -ma_psi(d[0]) * ma_psi(d[1]) * ma_psi(d[2]) -
             (std::min(d[0], 0.0) + std::min(d[1], 0.0) + std::min(d[2], 0.0));
    case Family::MinimalLagrangian:
      return -(atan_phi(d[0]) + atan_phi(d[1]) + atan_phi(d[2]));
    case Family::Custom:
      break;
  }
  double v = main.G(main.phi(d[0]) + main.phi(d[1]) + main.phi(d[2]));
  if (addend) v += addend->G(addend->phi(d[0]) + addend->phi(d[1]) + addend->phi(d[2]));
  return v;
}

std::array<double, 3> EigenFunctionSpec::gradient(const std::array<double, 3>& d) const {
  std::array<double, 3> g{};
  switch (family) {
    case Family::Laplacian:
      return {-1.0, -1.0, -1.0};
    case Family::MongeAmpere: {
      const double p[3] = {ma_psi(d[0]), ma_psi(d[1]), ma_psi(d[2])};
      for (int k = 0; k < 3; ++k)
        g[k] = -ma_dpsi(d[k]) * p[(k + 1) % 3] * p[(k + 2) % 3] - (d[k] < 0 ? 1.0 : 0.0);
      return g;
    }
    case Family::MinimalLagrangian:
      return {-atan_dphi(d[0]), -atan_dphi(d[1]), -atan_dphi(d[2])};
    case Family::Custom:
      break;
  }
  const double t = main.phi(d[0]) + main.phi(d[1]) + main.phi(d[2]);
  for (int k = 0; k < 3; ++k) g[k] = main.dG(t) * main.dphi(d[k]);
  if (addend) {
    const double t2 = addend->phi(d[0]) + addend->phi(d[1]) + addend->phi(d[2]);
    for (int k = 0; k < 3; ++k) g[k] += addend->dG(t2) * addend->dphi(d[k]);
  }
  return g;
}

bool EigenFunctionSpec::check_shape(double range, int samples) const {
  auto check = [&](const EigenTerm& t) {
    const double dx = 2 * range / (samples - 1);
    for (int i = 1; i + 1 < samples; ++i) {
      const double x = -range + i * dx;
      const double p0 = t.phi(x - dx), p1 = t.phi(x), p2 = t.phi(x + dx);
      const double scale = std::max({1.0, std::abs(p0), std::abs(p1), std::abs(p2)});
      if (p0 - 2 * p1 + p2 > 1e-8 * scale) return false;
      if (t.G(x + dx) - t.G(x) > 1e-8 * std::max(1.0, std::abs(t.G(x)))) return false;
    }
    return true;
  };
  return check(main) && (!addend || check(*addend));
}

OTBoundarySpec OTBoundarySpec::ball(const Vec3& center, double radius) {
  return {[center, radius](const Vec3& n) { return dot(center, n) + radius * norm(n); }};
}

OTBoundarySpec OTBoundarySpec::from_domain(const SignedDistanceDomain& target, int samples) {
  const BoundingCube& box = target.bounding_cube();
  const Vec3 mid = box.lo + Vec3{box.side, box.side, box.side} * 0.5;
  const double fd = 1e-6 * box.side;
  std::mt19937_64 rng(0x0f7);
  std::normal_distribution<double> g;
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(samples));
  for (int s = 0; s < samples; ++s) {
    Vec3 dir = normalized(Vec3{g(rng), g(rng), g(rng)});
    // March from the box centre to a sign change, then project.
    double lo = 0.0, hi = box.side;
    if (target.distance(mid + dir * lo) >= 0) continue;
    for (int it = 0; it < 60; ++it) {
      double m = 0.5 * (lo + hi);
      (target.distance(mid + dir * m) < 0 ? lo : hi) = m;
    }
    pts.push_back(target.project(mid + dir * lo, fd));
  }
  if (pts.empty()) throw ConfigError("target domain '" + target.name() + "' has no boundary samples");
  auto shared = std::make_shared<std::vector<Vec3>>(std::move(pts));
  SignedDistanceDomain dom = target;
  return {[shared, dom, fd](const Vec3& n) {
    const Vec3 u = normalized(n);
    const Vec3* best = &(*shared)[0];
    for (const Vec3& p : *shared)
      if (dot(p, u) > dot(*best, u)) best = &p;
    // Local refinement: step along the tangential part of n and reproject.
    Vec3 p = *best;
    double step = 0.1 * dom.bounding_cube().side;
    for (int it = 0; it < 200 && step > 1e-13; ++it) {
      Vec3 q = dom.project(p + u * step, fd);
      if (dot(q, u) > dot(p, u)) {
        p = q;
      } else {
        step *= 0.5;
      }
    }
    return dot(p, u) * norm(n);
  }};
}

DiscreteOperator::DiscreteOperator(std::shared_ptr<const PointCloud> cloud)
    : cloud_(std::move(cloud)), schemes_(cloud_->size()), assigned_(cloud_->size(), false) {
  for (std::size_t i = 0; i < schemes_.size(); ++i) schemes_[i].node = static_cast<NodeId>(i);
}

bool DiscreteOperator::complete() const {
  return std::all_of(assigned_.begin(), assigned_.end(), [](bool b) { return b; });
}

bool DiscreteOperator::has_dirichlet() const {
  return std::any_of(schemes_.begin(), schemes_.end(),
                     [](const NodeScheme& s) { return s.kind == SchemeKind::Dirichlet; });
}

std::uint32_t DiscreteOperator::second_stencil(NodeId i, const IVec3& dir) {
  const IVec3 d = sign_canonical(primitive(dir));
  auto pack = [](int v) { return static_cast<std::uint64_t>(v + 512) & 0x3ffu; };
  const std::uint64_t key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(i)) << 32) |
                            (pack(d.x) << 20) | (pack(d.y) << 10) | pack(d.z);
  auto it = second_cache_.find(key);
  if (it != second_cache_.end()) return it->second;
  const std::uint32_t id = table_.add(build_second_directional(*cloud_, i, d));
  second_cache_.emplace(key, id);
  return id;
}

std::uint32_t DiscreteOperator::second_stencil(NodeId i, const Vec3& dir) {
  return table_.add(build_second_directional(*cloud_, i, dir));
}

std::uint32_t DiscreteOperator::first_stencil(NodeId i, const Vec3& dir) {
  return table_.add(build_first_directional_boundary(*cloud_, i, dir));
}

void DiscreteOperator::set_scheme(NodeScheme s) {
  const auto idx = static_cast<std::size_t>(s.node);
  if (idx >= schemes_.size()) throw Error("scheme node out of range");
  const double shift = schemes_[idx].shift;
  schemes_[idx] = std::move(s);
  schemes_[idx].shift = shift;
  assigned_[idx] = true;
}

void DiscreteOperator::set_frames(NodeId i, std::span<const Frame> frames) {
  NodeScheme& s = scheme(i);
  if (s.kind != SchemeKind::InteriorEigen) throw Error("set_frames on a non-eigen node");
  if (frames.empty()) throw Error("empty frame candidate set");
  s.frames.clear();
  s.frame_axes.assign(frames.begin(), frames.end());
  for (const Frame& f : frames)
    s.frames.push_back({second_stencil(i, f[0]), second_stencil(i, f[1]), second_stencil(i, f[2])});
  s.frozen = 0;
}

bool DiscreteOperator::generic(const NodeScheme& s) const {
  return s.kind == SchemeKind::InteriorDirectional && s.branches.empty() && directional_;
}

std::vector<NodeId> DiscreteOperator::neighbors(NodeId i) const {
  const NodeScheme& s = scheme(i);
  std::vector<NodeId> out;
  auto add = [&](std::uint32_t id) {
    if (id == AffineBranch::kNoStencil) return;
    for (NodeId j : table_.neighbors(id))
      if (j != i) out.push_back(j);
  };
  for (const AffineBranch& b : s.branches) add(b.stencil);
  for (const FrameStencils& f : s.frames)
    for (std::uint32_t id : f) add(id);
  for (std::uint32_t id : s.stencils) add(id);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double DiscreteOperator::eigen_value(const NodeScheme& s, const FrameStencils& f,
                                     std::span<const double> u) const {
  return eigen_->evaluate({table_.apply(f[0], u), table_.apply(f[1], u), table_.apply(f[2], u)}) +
         s.source;
}

double DiscreteOperator::directional_value(const NodeScheme& s, std::span<const double> u,
                                           double ui) const {
  double d[16];
  std::vector<double> big;
  double* dp = d;
  if (s.stencils.size() > 16) {
    big.resize(s.stencils.size());
    dp = big.data();
  }
  for (std::size_t k = 0; k < s.stencils.size(); ++k)
    dp[k] = table_.neighbor_sum(s.stencils[k], u) - table_.weight(s.stencils[k]) * ui;
  return directional_(cloud_->position(s.node), ui, {dp, s.stencils.size()});
}

std::size_t DiscreteOperator::candidate_count(NodeId i) const {
  const NodeScheme& s = scheme(i);
  if (s.kind == SchemeKind::InteriorEigen) return s.frames.size();
  if (generic(s)) return 1;
  return s.branches.size();
}

double DiscreteOperator::candidate_value(NodeId i, std::uint32_t b, std::span<const double> u,
                                         double c) const {
  const NodeScheme& s = scheme(i);
  const double shift = c * s.shift;
  if (s.kind == SchemeKind::InteriorEigen) return eigen_value(s, s.frames[b], u) + shift;
  if (generic(s)) return directional_value(s, u, u[static_cast<std::size_t>(i)]) + shift;
  const AffineBranch& br = s.branches[b];
  double v = br.alpha * u[static_cast<std::size_t>(i)] + br.constant + shift;
  if (br.stencil != AffineBranch::kNoStencil) v += br.weight * table_.apply(br.stencil, u);
  return v;
}

double DiscreteOperator::residual(NodeId i, std::span<const double> u, double c) const {
  const std::size_t n = candidate_count(i);
  double best = -std::numeric_limits<double>::infinity();
  for (std::uint32_t b = 0; b < n; ++b) best = std::max(best, candidate_value(i, b, u, c));
  return best;
}

double DiscreteOperator::frozen_residual(NodeId i, std::span<const double> u, double c) const {
  return candidate_value(i, scheme(i).frozen, u, c);
}

double DiscreteOperator::refresh(NodeId i, std::span<const double> u, double c) {
  const std::size_t n = candidate_count(i);
  double best = -std::numeric_limits<double>::infinity();
  std::uint32_t arg = 0;
  for (std::uint32_t b = 0; b < n; ++b) {
    const double v = candidate_value(i, b, u, c);
    if (v > best) {
      best = v;
      arg = b;
    }
  }
  scheme(i).frozen = arg;
  return best;
}

double DiscreteOperator::local_inverse(NodeId i, std::span<const double> u, double c) const {
  const NodeScheme& s = scheme(i);
  const double shift = c * s.shift;
  const double ui = u[static_cast<std::size_t>(i)];

  if (s.kind == SchemeKind::InteriorEigen) {
    const FrameStencils& f = s.frames[s.frozen];
    const std::array<double, 3> N = {table_.neighbor_sum(f[0], u), table_.neighbor_sum(f[1], u),
                                     table_.neighbor_sum(f[2], u)};
    const std::array<double, 3> A = {table_.weight(f[0]), table_.weight(f[1]), table_.weight(f[2])};
    if (eigen_->affine()) {
      // -(sum N_j - A_j u) + f + c s = 0
      const double den = A[0] + A[1] + A[2];
      if (!(den > 0)) throw NonmonotoneLocal(i);
      return (N[0] + N[1] + N[2] - s.source - shift) / den;
    }
    auto g = [&](double x) {
      return eigen_->evaluate({N[0] - A[0] * x, N[1] - A[1] * x, N[2] - A[2] * x}) + s.source + shift;
    };
    auto dg = [&](double x) {
      auto gr = eigen_->gradient({N[0] - A[0] * x, N[1] - A[1] * x, N[2] - A[2] * x});
      return -(gr[0] * A[0] + gr[1] * A[1] + gr[2] * A[2]);
    };
    return solve_monotone_scalar(g, dg, ui, i);
  }

  if (generic(s)) {
    auto g = [&](double x) { return directional_value(s, u, x) + shift; };
    auto dg = [&](double x) {
      const double step = 1e-7 * std::max(1.0, std::abs(x));
      return (g(x + step) - g(x - step)) / (2 * step);
    };
    return solve_monotone_scalar(g, dg, ui, i);
  }

  const AffineBranch& br = s.branches[s.frozen];
  double coef = br.alpha;
  double rest = br.constant + shift;
  if (br.stencil != AffineBranch::kNoStencil) {
    coef -= br.weight * table_.weight(br.stencil);
    rest += br.weight * table_.neighbor_sum(br.stencil, u);
  }
  if (!(coef > 0)) throw NonmonotoneLocal(i);
  return -rest / coef;
}

double DiscreteOperator::max_residual(std::span<const double> u, double c) const {
  double m = 0.0;
  for (std::size_t i = 0; i < schemes_.size(); ++i)
    m = std::max(m, std::abs(residual(static_cast<NodeId>(i), u, c)));
  return m;
}

double solve_monotone_scalar(const ScalarFn& f, const ScalarFn& df, double guess, NodeId node) {
  const double inf = std::numeric_limits<double>::infinity();
  double lo = -inf, hi = inf;
  double x = guess;
  double fx = f(x);
  if (fx == 0.0) return x;
  (fx > 0 ? hi : lo) = x;
  double step = 1e-3 * std::max(1.0, std::abs(x));
  for (int it = 0; it < 200; ++it) {
    const double d = df(x);
    double xn = (d > 0 && std::isfinite(d)) ? x - fx / d : std::numeric_limits<double>::quiet_NaN();
    if (!(xn > lo && xn < hi)) {
      if (std::isfinite(lo) && std::isfinite(hi)) {
        xn = 0.5 * (lo + hi);
      } else {
        step *= 2;
        xn = std::isfinite(hi) ? hi - step : lo + step;
      }
    }
    const double fn = f(xn);
    if (!std::isfinite(fn)) throw NonmonotoneLocal(node);
    if (fn == 0.0) return xn;
    (fn > 0 ? hi : lo) = xn;
    const double tol = 1e-12 * std::max(1.0, std::abs(xn));
    if (std::abs(xn - x) <= tol || (hi - lo) <= tol) return xn;
    x = xn;
    fx = fn;
  }
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw NonmonotoneLocal(node);
  return x;
}

void assemble_directional(DiscreteOperator& op, std::span<const Vec3> directions, DirectionalFn F) {
  const PointCloud& cloud = op.cloud();
  op.set_directional_fn(std::move(F));
  for (NodeId i = 0; i < static_cast<NodeId>(cloud.interior_count()); ++i) {
    NodeScheme s;
    s.node = i;
    s.kind = SchemeKind::InteriorDirectional;
    for (const Vec3& d : directions) s.stencils.push_back(op.second_stencil(i, d));
    op.set_scheme(std::move(s));
  }
}

void assemble_directional_max(DiscreteOperator& op, std::span<const DirectionalBranch> branches,
                              const FieldFn& obstacle) {
  const PointCloud& cloud = op.cloud();
  std::vector<std::optional<IVec3>> lattice(branches.size());
  for (std::size_t b = 0; b < branches.size(); ++b)
    lattice[b] = lattice_direction(branches[b].direction, 64);
  for (NodeId i = 0; i < static_cast<NodeId>(cloud.interior_count()); ++i) {
    const Vec3 x = cloud.position(i);
    NodeScheme s;
    s.node = i;
    s.kind = SchemeKind::InteriorDirectional;
    for (std::size_t b = 0; b < branches.size(); ++b) {
      AffineBranch br;
      br.stencil = lattice[b] ? op.second_stencil(i, *lattice[b])
                              : op.second_stencil(i, branches[b].direction);
      br.weight = -1.0;
      br.constant = branches[b].source ? branches[b].source(x) : 0.0;
      s.branches.push_back(br);
    }
    if (obstacle) s.branches.push_back({1.0, AffineBranch::kNoStencil, 0.0, -obstacle(x)});
    op.set_scheme(std::move(s));
  }
}

void assemble_eigen(DiscreteOperator& op, EigenFunctionSpec spec, std::span<const Frame> frames) {
  const PointCloud& cloud = op.cloud();
  for (NodeId i = 0; i < static_cast<NodeId>(cloud.interior_count()); ++i) {
    NodeScheme s;
    s.node = i;
    s.kind = SchemeKind::InteriorEigen;
    s.source = spec.source ? spec.source(cloud.position(i)) : 0.0;
    op.set_scheme(std::move(s));
    op.set_frames(i, frames);
  }
  op.set_eigen_spec(std::move(spec));
}

void assemble_dirichlet(DiscreteOperator& op, const FieldFn& g) {
  const PointCloud& cloud = op.cloud();
  for (NodeId i = static_cast<NodeId>(cloud.interior_count()); i < static_cast<NodeId>(cloud.size()); ++i) {
    NodeScheme s;
    s.node = i;
    s.kind = SchemeKind::Dirichlet;
    s.branches.push_back({1.0, AffineBranch::kNoStencil, 0.0, -g(cloud.position(i))});
    op.set_scheme(std::move(s));
  }
}

void assemble_neumann(DiscreteOperator& op, const FieldFn& g) {
  const PointCloud& cloud = op.cloud();
  for (NodeId i = static_cast<NodeId>(cloud.interior_count()); i < static_cast<NodeId>(cloud.size()); ++i) {
    NodeScheme s;
    s.node = i;
    s.kind = SchemeKind::Neumann;
    s.branches.push_back({0.0, op.first_stencil(i, cloud.normal(i)), 1.0, -g(cloud.position(i))});
    op.set_scheme(std::move(s));
  }
}

void assemble_ot_boundary(DiscreteOperator& op, const OTBoundarySpec& spec,
                          const DirectionSet& directions) {
  const PointCloud& cloud = op.cloud();
  std::vector<Vec3> units;
  for (const IVec3& d : directions.directions) {
    units.push_back(unit(d));
    units.push_back(-unit(d));
  }
  std::vector<double> support;
  for (const Vec3& n : units) support.push_back(spec.support(n));
  for (NodeId i = static_cast<NodeId>(cloud.interior_count()); i < static_cast<NodeId>(cloud.size()); ++i) {
    const Vec3 nx = cloud.normal(i);
    NodeScheme s;
    s.node = i;
    s.kind = SchemeKind::OTBoundary;
    for (std::size_t k = 0; k < units.size(); ++k) {
      if (!(dot(units[k], nx) > 0)) continue;
      try {
        s.branches.push_back({0.0, op.first_stencil(i, units[k]), 1.0, -support[k]});
      } catch (const RayEscaped&) {
      }
    }
    if (s.branches.empty())
      throw ConfigError("boundary node " + std::to_string(i) + " has no admissible direction");
    op.set_scheme(std::move(s));
  }
}

MonotonicityReport monotonicity_audit(const DiscreteOperator& op, std::span<const double> u,
                                      int trials, std::uint64_t seed, double tol) {
  MonotonicityReport rep;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_node(0, op.size() - 1);
  std::uniform_real_distribution<double> amount(1e-6, 1e-1);
  std::vector<double> v(u.begin(), u.end());
  for (int t = 0; t < trials; ++t) {
    const auto i = static_cast<NodeId>(pick_node(rng));
    const double base = op.residual(i, v);
    const double d = amount(rng);
    v[static_cast<std::size_t>(i)] += d;
    const double up = op.residual(i, v);
    v[static_cast<std::size_t>(i)] -= d;
    ++rep.self_tests;
    if (up < base - tol) {
      ++rep.violations;
      rep.worst = std::max(rep.worst, base - up);
    }
    const std::vector<NodeId> nb = op.neighbors(i);
    if (nb.empty()) continue;
    const NodeId j = nb[std::uniform_int_distribution<std::size_t>(0, nb.size() - 1)(rng)];
    v[static_cast<std::size_t>(j)] += d;
    const double other = op.residual(i, v);
    v[static_cast<std::size_t>(j)] = u[static_cast<std::size_t>(j)];
    ++rep.neighbor_tests;
    if (other > base + tol) {
      ++rep.violations;
      rep.worst = std::max(rep.worst, other - base);
    }
  }
  return rep;
}

void set_eigenvalue_shift(DiscreteOperator& op, const FieldFn& s) {
  const PointCloud& cloud = op.cloud();
  for (NodeId i = 0; i < static_cast<NodeId>(cloud.interior_count()); ++i)
    op.scheme(i).shift = s(cloud.position(i));
}

}  // namespace ellipt3d
