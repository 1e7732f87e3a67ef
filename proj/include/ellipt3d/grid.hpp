#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ellipt3d/geometry.hpp"

namespace ellipt3d {

using NodeId = std::int32_t;

/// Axis-aligned cube [lo, lo + side]^3.
struct BoundingCube {
  Vec3 lo;
  double side = 0.0;

  Vec3 hi() const { return lo + Vec3{side, side, side}; }
  bool contains(const Vec3& p, double slack = 0.0) const;
};

/// A domain described by its signed distance (negative inside).
///
/// The built-in shapes carry closed-form projections and normals. Domains
/// built from a bare distance callback project by the damped iteration
/// x <- x - d(x) grad d(x), with a central-difference gradient.
class SignedDistanceDomain {
 public:
  using DistanceFn = std::function<double(const Vec3&)>;
  using ProjectFn = std::function<Vec3(const Vec3&)>;
  using NormalFn = std::function<Vec3(const Vec3&)>;

  static SignedDistanceDomain ball(double radius, const Vec3& center = {});
  /// Axis-aligned cube of side `side` centred at the origin.
  static SignedDistanceDomain cube(double side);
  static SignedDistanceDomain from_callback(std::string name, DistanceFn distance,
                                            BoundingCube bounds);

  const std::string& name() const { return name_; }
  double distance(const Vec3& p) const { return distance_(p); }
  /// Projects a point near the boundary onto it. `fd_step` is only used by
  /// callback domains; throws ProjectionFailure if the iteration stalls.
  Vec3 project(const Vec3& p, double fd_step) const;
  Vec3 outward_normal(const Vec3& boundary_point, double fd_step) const;
  const BoundingCube& bounding_cube() const { return bounds_; }
  double diameter() const { return bounds_.side * std::sqrt(3.0); }
  bool has_closed_form() const { return static_cast<bool>(project_); }

 private:
  std::string name_;
  DistanceFn distance_;
  ProjectFn project_;
  NormalFn normal_;
  BoundingCube bounds_;
};

/// Parses "ball(r)" or "cube(s)".
SignedDistanceDomain parse_domain(std::string_view spec);

/// Resolution parameters of a cloud. All lengths are in physical units;
/// epsilon is computed after scaling the bounding cube to unit side.
struct GridParams {
  int n = 0;
  int n_boundary = 0;  ///< sub-cells per lattice cell along the boundary
  double side = 0.0;
  double h = 0.0;
  double h_boundary = 0.0;
  double delta = 0.0;
  double epsilon = 0.0;

  static GridParams for_lattice(int n, double side);
  /// Widest integer stencil: floor(epsilon / h).
  int stencil_width() const;
};

struct BoundaryPoint {
  Vec3 position;
  Vec3 normal;
  IVec3 cube;  ///< lower-corner lattice index of the source cube
};

/// Lattice nodes x_ijk = lo + (i, j, k) h with distance(x) + delta < 0.
/// Throws DomainTooSmall when none qualify.
std::vector<IVec3> build_interior(const SignedDistanceDomain& domain, int n);

/// Lattice cubes with at least one corner strictly inside and one strictly outside.
std::vector<IVec3> find_boundary_cubes(const SignedDistanceDomain& domain, int n);

/// Sub-samples one boundary cube at spacing h_B, keeps candidates with
/// |distance| < h_B / 2 and projects them onto the boundary.
std::vector<BoundaryPoint> sample_boundary_points(const SignedDistanceDomain& domain,
                                                  const IVec3& cube, const GridParams& params);

/// Interior lattice points followed by projected boundary points.
///
/// Node ids [0, interior_count()) are lattice points, the rest are boundary
/// points. Immutable after construction.
class PointCloud {
 public:
  PointCloud(const SignedDistanceDomain& domain, GridParams params, std::vector<IVec3> interior,
             std::vector<BoundaryPoint> boundary);

  const GridParams& params() const { return params_; }
  const BoundingCube& bounds() const { return bounds_; }

  std::size_t size() const { return positions_.size(); }
  std::size_t interior_count() const { return lattice_.size(); }
  std::size_t boundary_count() const { return normals_.size(); }
  bool is_boundary(NodeId id) const { return static_cast<std::size_t>(id) >= lattice_.size(); }

  const Vec3& position(NodeId id) const { return positions_[static_cast<std::size_t>(id)]; }
  std::span<const Vec3> positions() const { return positions_; }
  const IVec3& lattice_index(NodeId id) const { return lattice_[static_cast<std::size_t>(id)]; }
  const Vec3& normal(NodeId id) const {
    return normals_[static_cast<std::size_t>(id) - lattice_.size()];
  }
  const IVec3& source_cube(NodeId id) const {
    return cubes_[static_cast<std::size_t>(id) - lattice_.size()];
  }

  Vec3 lattice_point(const IVec3& ijk) const;
  /// Interior node at lattice index ijk, if that node belongs to the cloud.
  std::optional<NodeId> lattice_node(const IVec3& ijk) const;

  /// All nodes with |x - q| <= r, in increasing id order.
  std::vector<NodeId> within(const Vec3& q, double r) const;
  template <typename F>
  void for_each_within(const Vec3& q, double r, F&& f) const;

 private:
  int cell_of(double coord, int axis) const;

  GridParams params_;
  BoundingCube bounds_;
  std::vector<Vec3> positions_;
  std::vector<IVec3> lattice_;
  std::vector<Vec3> normals_;
  std::vector<IVec3> cubes_;
  std::vector<NodeId> lattice_lookup_;  // (n+1)^3, -1 if absent
  int cells_ = 0;
  double cell_size_ = 0.0;
  std::vector<std::uint32_t> cell_start_;
  std::vector<NodeId> cell_nodes_;
};

/// Builds the complete cloud; boundary points closer than h_B / 4 are merged.
PointCloud assemble_point_cloud(const SignedDistanceDomain& domain, int n);

/// Plain-text dump: header "# ellipt3d-cloud v1 n=<n> nB=<n_B>", then
/// "I x y z" or "B x y z nx ny nz" per node.
void write_cloud(const PointCloud& cloud, std::ostream& os);

template <typename F>
void PointCloud::for_each_within(const Vec3& q, double r, F&& f) const {
  const double r2 = r * r;
  int lo[3], hi[3];
  for (int a = 0; a < 3; ++a) {
    lo[a] = cell_of(q[a] - r, a);
    hi[a] = cell_of(q[a] + r, a);
  }
  for (int i = lo[0]; i <= hi[0]; ++i)
    for (int j = lo[1]; j <= hi[1]; ++j)
      for (int k = lo[2]; k <= hi[2]; ++k) {
        std::size_t c = (static_cast<std::size_t>(i) * cells_ + j) * cells_ + k;
        for (std::uint32_t s = cell_start_[c]; s < cell_start_[c + 1]; ++s) {
          NodeId id = cell_nodes_[s];
          Vec3 d = positions_[static_cast<std::size_t>(id)] - q;
          if (dot(d, d) <= r2) f(id);
        }
      }
}

}  // namespace ellipt3d
