#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "ellipt3d/frames.hpp"
#include "ellipt3d/grid.hpp"
#include "ellipt3d/stencil.hpp"

namespace ellipt3d {

using ScalarFn = std::function<double(double)>;
using FieldFn = std::function<double(const Vec3&)>;

/// One G(sum_j phi(d_j)) term. phi concave, G nonincreasing.
struct EigenTerm {
  ScalarFn phi, dphi, G, dG;
};

/// G(sum phi(lambda_j)) [+ G2(sum phi2(lambda_j))] + f(x), discretised as a
/// maximum over orthogonal frames of the same expression in the frame's
/// second directional derivatives.
struct EigenFunctionSpec {
  enum class Family { Laplacian, MongeAmpere, MinimalLagrangian, Custom };

  Family family = Family::Custom;
  EigenTerm main;
  std::optional<EigenTerm> addend;
  FieldFn source;

  static EigenFunctionSpec laplacian(FieldFn source);
  /// -prod max(l_j, 0) - sum min(l_j, 0) + f, with log clamped at 1e-12.
  static EigenFunctionSpec monge_ampere(FieldFn source);
  /// -sum (arctan max(l_j, 0) + min(l_j, 0)) + f.
  static EigenFunctionSpec minimal_lagrangian(FieldFn source);

  /// Operator value without the source term.
  double evaluate(const std::array<double, 3>& d) const;
  /// d evaluate / d d_j.
  std::array<double, 3> gradient(const std::array<double, 3>& d) const;
  /// True when the operator is affine in the derivatives.
  bool affine() const { return family == Family::Laplacian; }

  /// phi concave and G nonincreasing on a sample grid of [-range, range].
  bool check_shape(double range = 10.0, int samples = 2001) const;
};

/// Support function H*(n) of a convex target set.
struct OTBoundarySpec {
  std::function<double(const Vec3&)> support;

  static OTBoundarySpec ball(const Vec3& center, double radius);
  /// Numeric Legendre-Fenchel transform: max of p.n over projected samples
  /// of the target boundary, refined locally around the best sample.
  static OTBoundarySpec from_domain(const SignedDistanceDomain& target, int samples = 10000);
};

enum class SchemeKind { InteriorDirectional, InteriorEigen, Dirichlet, Neumann, OTBoundary };

/// alpha u_i + weight * D u_i + constant, where D is a stored stencil.
struct AffineBranch {
  double alpha = 0.0;
  std::uint32_t stencil = kNoStencil;
  double weight = 0.0;
  double constant = 0.0;

  static constexpr std::uint32_t kNoStencil = 0xffffffffu;
};

using FrameStencils = std::array<std::uint32_t, 3>;

/// Residual of a node, F^h(x, u(x), u(x) - u(.)), nondecreasing in both
/// arguments. Branch and frame schemes are maxima; `frozen` selects the
/// branch or frame used by the local inverse.
struct NodeScheme {
  NodeId node = -1;
  SchemeKind kind = SchemeKind::Dirichlet;
  std::vector<AffineBranch> branches;
  std::vector<FrameStencils> frames;
  std::vector<Frame> frame_axes;
  std::vector<std::uint32_t> stencils;  ///< generic directional operator
  double source = 0.0;
  double shift = 0.0;  ///< weight of the eigenvalue c in the residual
  std::uint32_t frozen = 0;
};

/// F(x, u, [D_nu u for nu in directions]); nondecreasing in u and
/// nonincreasing in each derivative.
using DirectionalFn = std::function<double(const Vec3&, double, std::span<const double>)>;

struct DirectionalBranch {
  Vec3 direction;
  FieldFn source;  ///< branch residual is -D_nunu u + source
};

/// Per-node schemes on a point cloud, with the stencils they reference.
class DiscreteOperator {
 public:
  explicit DiscreteOperator(std::shared_ptr<const PointCloud> cloud);

  const PointCloud& cloud() const { return *cloud_; }
  std::shared_ptr<const PointCloud> cloud_ptr() const { return cloud_; }
  const StencilTable& stencils() const { return table_; }
  std::size_t size() const { return schemes_.size(); }
  NodeScheme& scheme(NodeId i) { return schemes_[static_cast<std::size_t>(i)]; }
  const NodeScheme& scheme(NodeId i) const { return schemes_[static_cast<std::size_t>(i)]; }
  bool assigned(NodeId i) const { return assigned_[static_cast<std::size_t>(i)]; }
  bool complete() const;
  bool has_dirichlet() const;

  /// Cached second directional stencil along a lattice direction.
  std::uint32_t second_stencil(NodeId i, const IVec3& dir);
  std::uint32_t second_stencil(NodeId i, const Vec3& dir);
  std::uint32_t first_stencil(NodeId i, const Vec3& dir);
  std::uint32_t add_stencil(const Stencil& s) { return table_.add(s); }

  void set_scheme(NodeScheme s);
  void set_eigen_spec(EigenFunctionSpec spec) { eigen_ = std::move(spec); }
  const std::optional<EigenFunctionSpec>& eigen_spec() const { return eigen_; }
  void set_directional_fn(DirectionalFn f) { directional_ = std::move(f); }
  /// Replaces the candidate frames of an eigen node.
  void set_frames(NodeId i, std::span<const Frame> frames);

  /// Full residual (maximum over all branches or frames), plus c * shift.
  double residual(NodeId i, std::span<const double> u, double c = 0.0) const;
  /// Residual of the frozen branch or frame only.
  double frozen_residual(NodeId i, std::span<const double> u, double c = 0.0) const;
  /// Points `frozen` at the maximising branch or frame; returns the full residual.
  double refresh(NodeId i, std::span<const double> u, double c = 0.0);
  /// u_i solving frozen_residual = 0 with the neighbours held fixed.
  double local_inverse(NodeId i, std::span<const double> u, double c = 0.0) const;
  /// Value of branch or frame `b` (the argmax candidates).
  double candidate_value(NodeId i, std::uint32_t b, std::span<const double> u, double c) const;
  std::size_t candidate_count(NodeId i) const;

  double max_residual(std::span<const double> u, double c = 0.0) const;
  /// Nodes other than i referenced by any stencil of its scheme.
  std::vector<NodeId> neighbors(NodeId i) const;

 private:
  bool generic(const NodeScheme& s) const;
  double eigen_value(const NodeScheme& s, const FrameStencils& f, std::span<const double> u) const;
  double directional_value(const NodeScheme& s, std::span<const double> u, double ui) const;

  std::shared_ptr<const PointCloud> cloud_;
  StencilTable table_;
  std::vector<NodeScheme> schemes_;
  std::vector<bool> assigned_;
  std::optional<EigenFunctionSpec> eigen_;
  DirectionalFn directional_;
  std::unordered_map<std::uint64_t, std::uint32_t> second_cache_;
};

/// Root of an increasing scalar function: Newton steps safeguarded by a
/// bracket, 1e-12 relative tolerance. Throws NonmonotoneLocal (with `node`)
/// when no bracket is found.
double solve_monotone_scalar(const ScalarFn& f, const ScalarFn& df, double guess, NodeId node = -1);

void assemble_directional(DiscreteOperator& op, std::span<const Vec3> directions, DirectionalFn F);
/// max_b (-D_{nu_b nu_b} u + f_b) at interior nodes, optionally with an
/// obstacle branch u - g.
void assemble_directional_max(DiscreteOperator& op, std::span<const DirectionalBranch> branches,
                              const FieldFn& obstacle = {});
/// Eigen schemes at interior nodes over the frames of `frames`.
void assemble_eigen(DiscreteOperator& op, EigenFunctionSpec spec, std::span<const Frame> frames);
void assemble_dirichlet(DiscreteOperator& op, const FieldFn& g);
void assemble_neumann(DiscreteOperator& op, const FieldFn& g);
/// Unit directions of `directions` in both signs with n . n_x > 0; directions
/// whose ray escapes the lattice are skipped.
void assemble_ot_boundary(DiscreteOperator& op, const OTBoundarySpec& spec,
                          const DirectionSet& directions);
struct MonotonicityReport {
  int self_tests = 0;
  int neighbor_tests = 0;
  int violations = 0;
  double worst = 0.0;
};

/// Random perturbation check: raising u_i must not lower residual i and
/// raising a neighbour must not raise it, up to `tol`.
MonotonicityReport monotonicity_audit(const DiscreteOperator& op, std::span<const double> u,
                                      int trials = 200, std::uint64_t seed = 7, double tol = 1e-10);

/// Interior residuals become F^h + c s(x).
void set_eigenvalue_shift(DiscreteOperator& op, const FieldFn& s);

}  // namespace ellipt3d
