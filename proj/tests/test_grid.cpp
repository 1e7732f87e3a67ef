#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "ellipt3d/errors.hpp"
#include "ellipt3d/grid.hpp"

using namespace ellipt3d;

namespace {

std::vector<Vec3> sphere_samples(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<Vec3> out;
  for (int i = 0; i < count; ++i) out.push_back(normalized(Vec3{g(rng), g(rng), g(rng)}));
  return out;
}

}  // namespace

TEST_CASE("grid parameters") {
  auto p = GridParams::for_lattice(16, 2.0);
  CHECK(p.h == doctest::Approx(0.125));
  CHECK(p.n_boundary == 2);
  CHECK(p.h_boundary == doctest::Approx(0.0625));
  CHECK(p.delta == doctest::Approx(0.0625));
  CHECK(p.epsilon == doctest::Approx(2.0 * std::sqrt(0.0625)));
  CHECK(p.stencil_width() == 4);
  CHECK(p.h_boundary <= p.delta);
  CHECK(p.delta < p.epsilon);

  CHECK(GridParams::for_lattice(256, 1.0).n_boundary == 4);
  CHECK_THROWS_AS(GridParams::for_lattice(3, 1.0), ConfigError);
}

TEST_CASE("domain registry") {
  auto b = parse_domain("ball(0.5)");
  CHECK(b.distance({0, 0, 0}) == doctest::Approx(-0.5));
  auto c = parse_domain(" cube(2) ");
  CHECK(c.distance({0, 0, 0}) == doctest::Approx(-1.0));
  CHECK(c.distance({2, 0, 0}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(parse_domain("torus(1)"), ConfigError);
  CHECK_THROWS_AS(parse_domain("ball()"), ConfigError);
  CHECK_THROWS_AS(parse_domain("ball(-1)"), ConfigError);
  CHECK_THROWS_AS(parse_domain("ball(1"), ConfigError);
}

TEST_CASE("ball projection and normals") {
  auto d = SignedDistanceDomain::ball(1.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  for (int i = 0; i < 500; ++i) {
    Vec3 p{u(rng), u(rng), u(rng)};
    if (norm(p) < 0.2) continue;
    Vec3 q = d.project(p, 1e-3);
    CHECK(std::abs(d.distance(q)) <= 1e-10 * d.diameter());
    CHECK(norm(d.outward_normal(q, 1e-3)) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("signed distance is 1-Lipschitz on sampled segments") {
  for (auto d : {SignedDistanceDomain::ball(1.0), SignedDistanceDomain::cube(1.0)}) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int i = 0; i < 1000; ++i) {
      Vec3 a{u(rng), u(rng), u(rng)}, b{u(rng), u(rng), u(rng)};
      CHECK(std::abs(d.distance(a) - d.distance(b)) <= norm(a - b) + 1e-14);
    }
  }
}

TEST_CASE("callback domain projects by iteration") {
  auto ball = SignedDistanceDomain::ball(0.7);
  auto d = SignedDistanceDomain::from_callback(
      "sphere", [](const Vec3& p) { return norm(p) - 0.7; }, ball.bounding_cube());
  CHECK_FALSE(d.has_closed_form());
  for (const Vec3& s : sphere_samples(100, 9)) {
    Vec3 q = d.project(s * 0.73, 1e-4);
    CHECK(std::abs(d.distance(q)) <= 1e-10 * d.diameter());
    Vec3 nrm = d.outward_normal(q, 1e-4);
    CHECK(norm(nrm) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(dot(nrm, s) > 0.999999);
  }
}

TEST_CASE("callback projection failure is reported") {
  // No zero level set: the iteration cannot converge.
  auto d = SignedDistanceDomain::from_callback(
      "empty", [](const Vec3&) { return 1.0; }, BoundingCube{{-1, -1, -1}, 2.0});
  CHECK_THROWS_AS(d.project({0.1, 0.2, 0.3}, 1e-3), ProjectionFailure);
}

TEST_CASE("build_interior on the unit ball") {
  auto d = SignedDistanceDomain::ball(1.0);
  auto p8 = GridParams::for_lattice(8, 2.0);
  auto pts = build_interior(d, 8);
  bool has_center = false;
  for (const IVec3& ijk : pts) {
    Vec3 x = d.bounding_cube().lo + to_vec(ijk) * p8.h;
    CHECK(norm(x) < 1.0 - p8.delta);
    if (norm(x) < 1e-12) has_center = true;
  }
  CHECK(has_center);

  auto p16 = GridParams::for_lattice(16, 2.0);
  std::size_t brute = 0;
  for (int i = 0; i <= 16; ++i)
    for (int j = 0; j <= 16; ++j)
      for (int k = 0; k <= 16; ++k) {
        Vec3 x{-1 + i * p16.h, -1 + j * p16.h, -1 + k * p16.h};
        if (norm(x) - 1.0 + p16.delta < 0) ++brute;
      }
  CHECK(build_interior(d, 16).size() == brute);
}

TEST_CASE("build_interior rejects a domain with no interior nodes") {
  auto d = SignedDistanceDomain::from_callback(
      "speck", [](const Vec3& p) { return norm(p - Vec3{0.05, 0.05, 0.05}) - 0.01; },
      BoundingCube{{-1, -1, -1}, 2.0});
  CHECK_THROWS_AS(build_interior(d, 4), DomainTooSmall);
}

TEST_CASE("boundary cubes on the unit ball") {
  auto d = SignedDistanceDomain::ball(1.0);
  const double h = 2.0 / 8;
  auto cubes = find_boundary_cubes(d, 8);
  bool has_pole = false;
  for (const IVec3& c : cubes) {
    int inside = 0, outside = 0;
    for (int m = 0; m < 8; ++m) {
      Vec3 x = Vec3{-1, -1, -1} + to_vec({c.x + (m & 1), c.y + ((m >> 1) & 1), c.z + ((m >> 2) & 1)}) * h;
      (d.distance(x) < 0 ? inside : outside)++;
    }
    CHECK(inside > 0);
    CHECK(outside > 0);
    Vec3 lo = Vec3{-1, -1, -1} + to_vec(c) * h;
    if (std::abs(lo.x + h - 1.0) < 1e-12 && lo.y <= 0 && lo.y + h >= 0 && lo.z <= 0 && lo.z + h >= 0)
      has_pole = true;
  }
  CHECK(has_pole);

  // Quadratic growth: least-squares exponent over n = 8, 12, 16.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int n : {8, 12, 16}) {
    double x = std::log(n), y = std::log(static_cast<double>(find_boundary_cubes(d, n).size()));
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  double slope = (3 * sxy - sx * sy) / (3 * sxx - sx * sx);
  CHECK(slope >= 1.7);
  CHECK(slope <= 2.3);
}

TEST_CASE("boundary samples per cube") {
  auto d = SignedDistanceDomain::ball(1.0);
  auto p = GridParams::for_lattice(8, 2.0);
  const int side = p.n_boundary + 1;
  for (const IVec3& c : find_boundary_cubes(d, 8)) {
    auto pts = sample_boundary_points(d, c, p);
    CHECK(pts.size() <= static_cast<std::size_t>(side * side * side));
    CHECK(pts.size() <= static_cast<std::size_t>(3 * side * side));
    for (const auto& b : pts) {
      CHECK(std::abs(norm(b.position) - 1.0) <= 1e-10);
      CHECK(dot(b.normal, b.position) == doctest::Approx(1.0));
      CHECK(b.cube == c);
    }
  }
}

TEST_CASE("selected candidates are between 1 and 3 (n_B + 1)^2 per cube") {
  // Independent count of the candidate filter, before projection.
  auto d = SignedDistanceDomain::ball(1.0);
  auto p = GridParams::for_lattice(8, 2.0);
  std::size_t total = 0, nonempty = 0;
  for (const IVec3& c : find_boundary_cubes(d, 8)) {
    int count = 0;
    for (int a = 0; a <= p.n_boundary; ++a)
      for (int b = 0; b <= p.n_boundary; ++b)
        for (int e = 0; e <= p.n_boundary; ++e) {
          Vec3 x = Vec3{-1, -1, -1} + to_vec(c) * p.h + Vec3{double(a), double(b), double(e)} * p.h_boundary;
          if (std::abs(d.distance(x)) < p.h_boundary / 2) ++count;
        }
    CHECK(count <= 3 * (p.n_boundary + 1) * (p.n_boundary + 1));
    total += static_cast<std::size_t>(count);
    if (count > 0) ++nonempty;
  }
  CHECK(total >= nonempty);
  CHECK(nonempty >= 1);
}

TEST_CASE("point cloud invariants on the unit ball") {
  auto d = SignedDistanceDomain::ball(1.0);
  for (int n : {8, 12}) {
    auto cloud = assemble_point_cloud(d, n);
    const auto& p = cloud.params();
    REQUIRE(cloud.interior_count() > 0);
    REQUIRE(cloud.boundary_count() > 0);
    for (NodeId i = 0; i < static_cast<NodeId>(cloud.interior_count()); ++i)
      CHECK(d.distance(cloud.position(i)) + p.delta < 0);

    double gap = 1e300;
    for (NodeId i = 0; i < static_cast<NodeId>(cloud.interior_count()); ++i)
      for (NodeId b = static_cast<NodeId>(cloud.interior_count()); b < static_cast<NodeId>(cloud.size()); ++b)
        gap = std::min(gap, norm(cloud.position(i) - cloud.position(b)));
    CHECK(gap >= p.delta - 1e-12);

    const double K = 4.0 * std::numbers::pi;
    CHECK(cloud.boundary_count() <= K * n * n * p.n_boundary * p.n_boundary);

    for (NodeId b = static_cast<NodeId>(cloud.interior_count()); b < static_cast<NodeId>(cloud.size()); ++b) {
      CHECK(std::abs(norm(cloud.position(b)) - 1.0) <= 1e-10);
      for (NodeId c = b + 1; c < static_cast<NodeId>(cloud.size()); ++c)
        CHECK(norm(cloud.position(b) - cloud.position(c)) >= p.h_boundary / 4);
    }

    std::set<IVec3> seen;
    for (NodeId i = 0; i < static_cast<NodeId>(cloud.interior_count()); ++i) {
      CHECK(seen.insert(cloud.lattice_index(i)).second);
      CHECK(cloud.lattice_node(cloud.lattice_index(i)) == i);
    }
  }
}

TEST_CASE("boundary covering within 3 h_B") {
  auto d = SignedDistanceDomain::ball(1.0);
  auto cloud = assemble_point_cloud(d, 12);
  const double hb = cloud.params().h_boundary;
  for (const Vec3& s : sphere_samples(1000, 21)) {
    double best = 1e300;
    for (NodeId b = static_cast<NodeId>(cloud.interior_count()); b < static_cast<NodeId>(cloud.size()); ++b)
      best = std::min(best, norm(cloud.position(b) - s));
    CHECK(best <= 3 * hb);
  }
}

TEST_CASE("neighbor queries match brute force") {
  auto cloud = assemble_point_cloud(SignedDistanceDomain::ball(1.0), 8);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.3, 1.3), r(0.0, 0.9);
  for (int q = 0; q < 200; ++q) {
    Vec3 c{u(rng), u(rng), u(rng)};
    double rad = r(rng);
    std::vector<NodeId> brute;
    for (NodeId i = 0; i < static_cast<NodeId>(cloud.size()); ++i) {
      Vec3 dd = cloud.position(i) - c;
      if (dot(dd, dd) <= rad * rad) brute.push_back(i);
    }
    CHECK(cloud.within(c, rad) == brute);
  }
}

TEST_CASE("boundary to interior ratio" * doctest::test_suite("claims")) {
  auto d = SignedDistanceDomain::ball(1.0);
  double prev = 1e300;
  for (int n : {8, 16, 24}) {
    auto cloud = assemble_point_cloud(d, n);
    double ratio = double(cloud.boundary_count()) / double(cloud.interior_count());
    MESSAGE("n=" << n << " boundary/interior=" << ratio);
    CHECK(ratio < prev);
    if (n == 16) CHECK(ratio <= 1.5);
    prev = ratio;
  }
}

TEST_CASE("cube domain boundary lies on faces") {
  auto d = SignedDistanceDomain::cube(1.0);
  auto cloud = assemble_point_cloud(d, 8);
  REQUIRE(cloud.boundary_count() > 0);
  for (NodeId b = static_cast<NodeId>(cloud.interior_count()); b < static_cast<NodeId>(cloud.size()); ++b) {
    Vec3 x = cloud.position(b);
    double m = std::max({std::abs(x.x), std::abs(x.y), std::abs(x.z)});
    CHECK(std::abs(m - 0.5) <= 1e-10);
    CHECK(norm(cloud.normal(b)) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("assembly is deterministic and dumps the documented format") {
  auto d = SignedDistanceDomain::ball(1.0);
  std::ostringstream a, b;
  write_cloud(assemble_point_cloud(d, 8), a);
  write_cloud(assemble_point_cloud(d, 8), b);
  CHECK(a.str() == b.str());
  std::istringstream in(a.str());
  std::string header;
  std::getline(in, header);
  CHECK(header == "# ellipt3d-cloud v1 n=8 nB=2");
  std::string line;
  int interior = 0, boundary = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    if (kind == "I") {
      CHECK(vals.size() == 3);
      ++interior;
    } else {
      CHECK(kind == "B");
      CHECK(vals.size() == 6);
      ++boundary;
    }
  }
  auto cloud = assemble_point_cloud(d, 8);
  CHECK(static_cast<std::size_t>(interior) == cloud.interior_count());
  CHECK(static_cast<std::size_t>(boundary) == cloud.boundary_count());
}
