#include "ellipt3d/frames.hpp"

#include <algorithm>
#include <cstring>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>

namespace ellipt3d {

namespace {

bool direction_less(const IVec3& a, const IVec3& b) {
  return std::make_tuple(norm_inf(a), norm2(a), a) < std::make_tuple(norm_inf(b), norm2(b), b);
}

IVec3 axis_canonical(const IVec3& v) { return sign_canonical(primitive(v)); }

/// Axes of V_k, and for each axis the axes that complete it to a frame.
struct LevelAxes {
  std::vector<IVec3> axes;
  std::map<IVec3, std::vector<IVec3>> partners;
};

LevelAxes level_axes(const FrameSet& level) {
  LevelAxes out;
  std::set<IVec3> axes;
  std::map<IVec3, std::set<IVec3>> partners;
  for (const Frame& f : level.frames)
    for (int i = 0; i < 3; ++i) {
      axes.insert(f[i]);
      for (int j = 0; j < 3; ++j)
        if (j != i) partners[f[i]].insert(f[j]);
    }
  out.axes.assign(axes.begin(), axes.end());
  for (auto& [axis, set] : partners) out.partners[axis].assign(set.begin(), set.end());
  return out;
}

/// Five candidates closest to `target` by (angle, |v|^2, lexicographic).
std::vector<IVec3> closest_five(const IVec3& target, const std::vector<IVec3>& pool) {
  std::vector<std::tuple<double, long long, IVec3>> ranked;
  ranked.reserve(pool.size());
  const Vec3 t = to_vec(target);
  for (const IVec3& v : pool) ranked.emplace_back(line_angle(t, to_vec(v)), norm2(v), v);
  std::sort(ranked.begin(), ranked.end());
  std::vector<IVec3> out;
  for (std::size_t i = 0; i < ranked.size() && i < 5; ++i) out.push_back(std::get<2>(ranked[i]));
  return out;
}

}  // namespace

DirectionSet enumerate_directions(int k) {
  DirectionSet out;
  out.k = k;
  for (int x = 0; x <= k; ++x)
    for (int y = -k; y <= k; ++y)
      for (int z = -k; z <= k; ++z) {
        IVec3 v{x, y, z};
        if (v == IVec3{}) continue;
        if (sign_canonical(v) != v) continue;
        if (primitive(v) != v) continue;
        out.directions.push_back(v);
      }
  std::sort(out.directions.begin(), out.directions.end(), direction_less);
  return out;
}

Frame canonical_frame(const Frame& f) {
  Frame c{axis_canonical(f[0]), axis_canonical(f[1]), axis_canonical(f[2])};
  std::sort(c.begin(), c.end());
  return c;
}

FrameSet enumerate_frames(int k, int samples) {
  const DirectionSet dirs = enumerate_directions(k);
  std::set<Frame> found;
  const auto& d = dirs.directions;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = i + 1; j < d.size(); ++j) {
      if (dot(d[i], d[j]) != 0) continue;
      IVec3 third = axis_canonical(cross(d[i], d[j]));
      if (norm_inf(third) > k) continue;
      found.insert(canonical_frame({d[i], d[j], third}));
    }
  FrameSet out;
  out.k = k;
  out.frames.assign(found.begin(), found.end());
  out.dtheta = estimate_angular_resolution(out.frames, samples);
  return out;
}

double estimate_angular_resolution(std::span<const Frame> frames, int samples,
                                   std::uint64_t seed) {
  if (frames.empty()) return std::acos(0.0);
  std::vector<std::array<Vec3, 3>> units;
  units.reserve(frames.size());
  for (const Frame& f : frames) units.push_back({unit(f[0]), unit(f[1]), unit(f[2])});

  static constexpr int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    // Gram-Schmidt on a Gaussian triple gives a Haar-distributed frame.
    Vec3 a{gauss(rng), gauss(rng), gauss(rng)};
    Vec3 b{gauss(rng), gauss(rng), gauss(rng)};
    Vec3 v0 = normalized(a);
    Vec3 v1 = normalized(b - v0 * dot(b, v0));
    Vec3 v2 = cross(v0, v1);
    const Vec3 v[3] = {v0, v1, v2};

    double best_cos = -1.0;  // cosine of the smallest worst-axis angle
    for (const auto& f : units) {
      double c[3][3];
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) c[i][j] = std::abs(dot(v[i], f[j]));
      for (const auto& p : perms) {
        double m = std::min({c[0][p[0]], c[1][p[1]], c[2][p[2]]});
        best_cos = std::max(best_cos, m);
      }
    }
    worst = std::max(worst, std::acos(std::min(1.0, best_cos)));
  }
  return worst;
}

FrameHierarchy build_hierarchy(int k_max, int samples) {
  if (k_max < 1) throw ConfigError("k_max must be at least 1");
  FrameHierarchy h;
  h.k_max = k_max;
  for (int k = 1; k <= k_max; ++k) h.levels.push_back(enumerate_frames(k, samples));

  std::vector<LevelAxes> axes;
  for (const auto& lvl : h.levels) axes.push_back(level_axes(lvl));

  for (int k = 1; k < k_max; ++k) {
    const LevelAxes& here = axes[static_cast<std::size_t>(k - 1)];
    const LevelAxes& up = axes[static_cast<std::size_t>(k)];
    std::map<IVec3, std::vector<IVec3>> m1;
    for (const IVec3& nu : here.axes) m1[nu] = closest_five(nu, up.axes);
    std::map<std::pair<IVec3, IVec3>, std::vector<IVec3>> m2;
    for (const Frame& f : h.level(k).frames) {
      for (const IVec3& mu : m1[f[0]]) {
        auto key = std::make_pair(f[1], mu);
        if (m2.count(key)) continue;
        m2[key] = closest_five(f[1], up.partners.at(mu));
      }
    }
    h.map1.push_back(std::move(m1));
    h.map2.push_back(std::move(m2));
  }
  return h;
}

bool operator==(const FrameHierarchy& a, const FrameHierarchy& b) {
  if (a.k_max != b.k_max || a.levels.size() != b.levels.size()) return false;
  for (std::size_t i = 0; i < a.levels.size(); ++i) {
    if (a.levels[i].k != b.levels[i].k || a.levels[i].frames != b.levels[i].frames) return false;
    if (std::memcmp(&a.levels[i].dtheta, &b.levels[i].dtheta, sizeof(double)) != 0) return false;
  }
  return a.map1 == b.map1 && a.map2 == b.map2;
}

std::vector<Frame> refine_candidates(const FrameHierarchy& hierarchy, int k, const Frame& best) {
  if (k < 1 || k >= hierarchy.k_max) throw Error("refinement level out of range");
  const auto& m1 = hierarchy.map1[static_cast<std::size_t>(k - 1)];
  const auto& m2 = hierarchy.map2[static_cast<std::size_t>(k - 1)];
  const Frame f = canonical_frame(best);
  std::vector<Frame> out;
  auto it1 = m1.find(f[0]);
  if (it1 == m1.end()) return out;
  for (const IVec3& mu1 : it1->second) {
    auto it2 = m2.find({f[1], mu1});
    if (it2 == m2.end()) continue;
    for (const IVec3& mu2 : it2->second) {
      Frame cand = canonical_frame({mu1, mu2, cross(mu1, mu2)});
      if (std::find(out.begin(), out.end(), cand) == out.end()) out.push_back(cand);
    }
  }
  return out;
}

ArgmaxResult multilevel_argmax(const std::function<double(const Frame&)>& score,
                               const FrameHierarchy& hierarchy, int k_star) {
  if (k_star < 1 || k_star > hierarchy.k_max) throw ConfigError("k_star outside the hierarchy");
  ArgmaxResult out;
  out.value = -std::numeric_limits<double>::infinity();
  auto scan = [&](const std::vector<Frame>& cands) {
    if (cands.empty()) throw Error("empty frame candidate set");
    for (const Frame& f : cands) {
      double v = score(f);
      if (v > out.value) {
        out.value = v;
        out.frame = f;
      }
    }
    out.level_values.push_back(out.value);
  };
  scan(hierarchy.level(1).frames);
  for (int k = 1; k < k_star; ++k) {
    out.value = -std::numeric_limits<double>::infinity();
    scan(refine_candidates(hierarchy, k, out.frame));
  }
  return out;
}

namespace {

void write_ivec(std::ostream& os, const IVec3& v) { os << v.x << ' ' << v.y << ' ' << v.z; }

std::vector<int> parse_ints(const std::string& line) {
  std::istringstream ss(line);
  std::vector<int> out;
  int v;
  while (ss >> v) out.push_back(v);
  if (!ss.eof()) throw FrameCacheError("malformed record: " + line);
  return out;
}

IVec3 ivec_at(const std::vector<int>& v, std::size_t i) { return {v[i], v[i + 1], v[i + 2]}; }

}  // namespace

void save_hierarchy(const FrameHierarchy& h, std::ostream& os) {
  os << "# ellipt3d-frames v1 kmax=" << h.k_max << '\n';
  for (int k = 1; k <= h.k_max; ++k) {
    os << "[E " << k << "]\n";
    for (const IVec3& d : enumerate_directions(k).directions) {
      write_ivec(os, d);
      os << '\n';
    }
    os << "[V " << k << "]\n";
    for (const Frame& f : h.level(k).frames) {
      write_ivec(os, f[0]);
      os << ' ';
      write_ivec(os, f[1]);
      os << ' ';
      write_ivec(os, f[2]);
      os << '\n';
    }
    os << "[D " << k << "]\n" << std::setprecision(17) << h.level(k).dtheta << '\n';
    if (k < h.k_max) {
      os << "[T1 " << k << "]\n";
      for (const auto& [nu, mus] : h.map1[static_cast<std::size_t>(k - 1)]) {
        write_ivec(os, nu);
        for (const IVec3& mu : mus) {
          os << ' ';
          write_ivec(os, mu);
        }
        os << '\n';
      }
      os << "[T2 " << k << "]\n";
      for (const auto& [key, rhos] : h.map2[static_cast<std::size_t>(k - 1)]) {
        write_ivec(os, key.first);
        os << ' ';
        write_ivec(os, key.second);
        for (const IVec3& rho : rhos) {
          os << ' ';
          write_ivec(os, rho);
        }
        os << '\n';
      }
    }
  }
}

FrameHierarchy load_hierarchy(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FrameCacheError("empty frame cache");
  const std::string magic = "# ellipt3d-frames v1 kmax=";
  if (line.rfind("# ellipt3d-frames ", 0) != 0) throw FrameCacheError("not a frame cache");
  if (line.rfind(magic, 0) != 0) throw FrameCacheError("unsupported frame cache version");
  FrameHierarchy h;
  try {
    h.k_max = std::stoi(line.substr(magic.size()));
  } catch (const std::exception&) {
    throw FrameCacheError("bad kmax in frame cache header");
  }
  if (h.k_max < 1 || h.k_max > 64) throw FrameCacheError("bad kmax in frame cache header");
  h.levels.resize(static_cast<std::size_t>(h.k_max));
  h.map1.resize(static_cast<std::size_t>(h.k_max - 1));
  h.map2.resize(static_cast<std::size_t>(h.k_max - 1));
  for (int k = 1; k <= h.k_max; ++k) h.levels[static_cast<std::size_t>(k - 1)].k = k;

  std::string section;
  int level = 0;
  std::vector<bool> seen_d(static_cast<std::size_t>(h.k_max), false);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.front() == '[') {
      std::istringstream ss(line.substr(1, line.find(']') - 1));
      if (!(ss >> section >> level) || level < 1 || level > h.k_max)
        throw FrameCacheError("bad section header: " + line);
      if ((section == "T1" || section == "T2") && level >= h.k_max)
        throw FrameCacheError("map section beyond kmax: " + line);
      continue;
    }
    const auto li = static_cast<std::size_t>(level - 1);
    if (section == "E") {
      auto v = parse_ints(line);
      if (v.size() != 3) throw FrameCacheError("bad direction record: " + line);
    } else if (section == "V") {
      auto v = parse_ints(line);
      if (v.size() != 9) throw FrameCacheError("bad frame record: " + line);
      h.levels[li].frames.push_back({ivec_at(v, 0), ivec_at(v, 3), ivec_at(v, 6)});
    } else if (section == "D") {
      char* end = nullptr;
      double d = std::strtod(line.c_str(), &end);
      if (end == line.c_str()) throw FrameCacheError("bad dtheta record: " + line);
      h.levels[li].dtheta = d;
      seen_d[li] = true;
    } else if (section == "T1") {
      auto v = parse_ints(line);
      if (v.size() < 6 || v.size() % 3 != 0) throw FrameCacheError("bad T1 record: " + line);
      std::vector<IVec3> mus;
      for (std::size_t i = 3; i < v.size(); i += 3) mus.push_back(ivec_at(v, i));
      h.map1[li][ivec_at(v, 0)] = std::move(mus);
    } else if (section == "T2") {
      auto v = parse_ints(line);
      if (v.size() < 9 || v.size() % 3 != 0) throw FrameCacheError("bad T2 record: " + line);
      std::vector<IVec3> rhos;
      for (std::size_t i = 6; i < v.size(); i += 3) rhos.push_back(ivec_at(v, i));
      h.map2[li][{ivec_at(v, 0), ivec_at(v, 3)}] = std::move(rhos);
    } else {
      throw FrameCacheError("record outside a known section: " + line);
    }
  }
  for (int k = 1; k <= h.k_max; ++k) {
    const auto li = static_cast<std::size_t>(k - 1);
    if (h.levels[li].frames.empty() || !seen_d[li])
      throw FrameCacheError("frame cache is missing level " + std::to_string(k));
    for (const Frame& f : h.levels[li].frames)
      if (dot(f[0], f[1]) != 0 || dot(f[0], f[2]) != 0 || dot(f[1], f[2]) != 0)
        throw FrameCacheError("frame cache holds a non-orthogonal frame");
    if (k < h.k_max && (h.map1[li].empty() || h.map2[li].empty()))
      throw FrameCacheError("frame cache is missing maps for level " + std::to_string(k));
  }
  return h;
}

}  // namespace ellipt3d
