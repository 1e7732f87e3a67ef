#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "ellipt3d/geometry.hpp"
#include "ellipt3d/grid.hpp"
#include "ellipt3d/nnls.hpp"

namespace ellipt3d {

enum class StencilKind { SecondDirectional, FirstDirectional };

/// D u(x0) = sum_j a_j (u(x_j) - u(x0)).
///
/// Second directional stencils have a_j >= 0; first directional (boundary)
/// stencils have a_j <= 0.
struct Stencil {
  NodeId reference = -1;
  std::vector<NodeId> neighbors;
  std::vector<double> coefficients;
  Vec3 direction;
  StencilKind kind = StencilKind::SecondDirectional;
  double angular_error = 0.0;  ///< radians
};

double apply_stencil(const Stencil& stencil, std::span<const double> u);

/// "node nu_x nu_y nu_z a_1..a_m neighbor_ids" on one line.
void write_stencil(const Stencil& stencil, std::ostream& os);

/// Integer vector parallel to `dir` (within 1e-12) with infinity norm at
/// most `max_width`, if any.
std::optional<IVec3> lattice_direction(const Vec3& dir, int max_width);

/// (u(x0 + nu h) + u(x0 - nu h) - 2 u(x0)) / (|nu| h)^2. Empty when either
/// neighbour is not an interior lattice node or |nu| h >= epsilon.
std::optional<Stencil> centered_second_difference(const PointCloud& cloud, NodeId x0,
                                                  const IVec3& nu);

struct OctantSelection {
  std::array<NodeId, 8> neighbors{};
  double angular_error = 0.0;
};

/// One neighbour per octant of the frame (nu, nu2, nu3), each minimising
/// theta^2 + (phi - pi/2)^2 about the signed nu axis. Ties go to the closer
/// point, then to the lower id. Throws EmptyOctant.
OctantSelection select_octant_neighbors(const PointCloud& cloud, NodeId x0, const Vec3& nu,
                                        double radius);
inline OctantSelection select_octant_neighbors(const PointCloud& cloud, NodeId x0,
                                               const Vec3& nu) {
  return select_octant_neighbors(cloud, x0, nu, cloud.params().epsilon);
}

/// Consistent monotone approximation of u_nunu at an interior node. Uses the
/// centred difference when nu is a short lattice direction with both
/// neighbours present, otherwise the octant least-squares construction.
Stencil build_second_directional(const PointCloud& cloud, NodeId x0, const Vec3& nu);
Stencil build_second_directional(const PointCloud& cloud, NodeId x0, const IVec3& nu);

/// Monotone approximation of the derivative along an exterior direction
/// at a boundary node, using the face where the ray x0 - t n first enters the
/// interior lattice.
Stencil build_first_directional_boundary(const PointCloud& cloud, NodeId x0, const Vec3& n_dir);

/// Flat storage for many stencils.
class StencilTable {
 public:
  using Id = std::uint32_t;

  Id add(const Stencil& s);
  std::size_t size() const { return start_.size() - 1; }
  std::size_t entries() const { return ids_.size(); }

  std::span<const NodeId> neighbors(Id id) const {
    return {ids_.data() + start_[id], ids_.data() + start_[id + 1]};
  }
  std::span<const double> coefficients(Id id) const {
    return {coef_.data() + start_[id], coef_.data() + start_[id + 1]};
  }
  NodeId reference(Id id) const { return reference_[id]; }
  /// sum_j a_j
  double weight(Id id) const { return weight_[id]; }
  double angular_error(Id id) const { return angle_[id]; }

  /// sum_j a_j u_j
  double neighbor_sum(Id id, std::span<const double> u) const {
    double s = 0.0;
    for (std::uint32_t k = start_[id]; k < start_[id + 1]; ++k)
      s += coef_[k] * u[static_cast<std::size_t>(ids_[k])];
    return s;
  }
  double apply(Id id, std::span<const double> u) const {
    return neighbor_sum(id, u) - weight_[id] * u[static_cast<std::size_t>(reference_[id])];
  }

 private:
  std::vector<std::uint32_t> start_{0};
  std::vector<NodeId> ids_;
  std::vector<double> coef_;
  std::vector<NodeId> reference_;
  std::vector<double> weight_;
  std::vector<double> angle_;
};

}  // namespace ellipt3d
