#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "ellipt3d/errors.hpp"
#include "ellipt3d/geometry.hpp"

namespace ellipt3d {

/// Primitive, sign-canonical integer directions with infinity norm <= k.
/// Ordered by (infinity norm, squared length, lexicographic), so the set
/// for k is a prefix of the set for k + 1.
struct DirectionSet {
  int k = 0;
  std::vector<IVec3> directions;
};

DirectionSet enumerate_directions(int k);

/// Orthogonal integer frame. Canonical form: each axis primitive and
/// sign-canonical, axes sorted lexicographically.
using Frame = std::array<IVec3, 3>;

Frame canonical_frame(const Frame& f);

struct FrameSet {
  int k = 0;
  std::vector<Frame> frames;
  double dtheta = 0.0;  ///< worst-case frame misalignment, radians
};

/// All canonical frames built from E_k; dtheta from a fixed-seed Monte Carlo run.
FrameSet enumerate_frames(int k, int samples = 4000);

/// max over Haar-random frames of (min over the set of the worst axis angle).
/// Axes are compared as undirected lines and up to permutation.
double estimate_angular_resolution(std::span<const Frame> frames, int samples,
                                   std::uint64_t seed = 0x5eed);

/// Nested frame sets with alignment maps between consecutive levels.
///
/// map1[k-1] sends each axis appearing in V_k to the five closest axes of
/// V_{k+1}; map2[k-1] sends (nu2, mu) to the five axes of V_{k+1} that
/// complete mu to a frame and lie closest to nu2.
struct FrameHierarchy {
  int k_max = 0;
  std::vector<FrameSet> levels;
  std::vector<std::map<IVec3, std::vector<IVec3>>> map1;
  std::vector<std::map<std::pair<IVec3, IVec3>, std::vector<IVec3>>> map2;

  const FrameSet& level(int k) const { return levels.at(static_cast<std::size_t>(k - 1)); }
  friend bool operator==(const FrameHierarchy&, const FrameHierarchy&);
};

FrameHierarchy build_hierarchy(int k_max, int samples = 4000);

/// Candidate frames at level k + 1 around the level-k frame `best`
/// (at most 25 after deduplication).
std::vector<Frame> refine_candidates(const FrameHierarchy& hierarchy, int k, const Frame& best);

struct ArgmaxResult {
  Frame frame;
  double value;
  std::vector<double> level_values;  ///< best value after each level
};

/// Full argmax over V_1, then refinement through levels 2..k_star.
ArgmaxResult multilevel_argmax(const std::function<double(const Frame&)>& score,
                               const FrameHierarchy& hierarchy, int k_star);

class FrameCacheError : public Error {
 public:
  using Error::Error;
};

/// "# ellipt3d-frames v1 kmax=<k>" followed by [E k], [V k], [D k], [T1 k]
/// and [T2 k] sections of space-separated integers.
void save_hierarchy(const FrameHierarchy& hierarchy, std::ostream& os);
FrameHierarchy load_hierarchy(std::istream& is);

}  // namespace ellipt3d
