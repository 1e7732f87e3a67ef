#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>

namespace ellipt3d {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

  constexpr Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  constexpr Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  constexpr Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

  friend constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
  friend constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
  friend constexpr Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
  friend constexpr Vec3 operator/(Vec3 a, double s) { return a *= (1.0 / s); }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;

  friend std::ostream& operator<<(std::ostream& os, const Vec3& v) {
    return os << '(' << v.x << ", " << v.y << ", " << v.z << ')';
  }
};

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) { return a / norm(a); }

/// Integer lattice vector. Used for stencil directions and frame axes.
struct IVec3 {
  int x = 0, y = 0, z = 0;

  constexpr int operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  friend constexpr bool operator==(const IVec3&, const IVec3&) = default;
  friend constexpr auto operator<=>(const IVec3&, const IVec3&) = default;
  friend constexpr IVec3 operator-(const IVec3& a) { return {-a.x, -a.y, -a.z}; }

  friend std::ostream& operator<<(std::ostream& os, const IVec3& v) {
    return os << '(' << v.x << ',' << v.y << ',' << v.z << ')';
  }
};

constexpr long long dot(const IVec3& a, const IVec3& b) {
  return static_cast<long long>(a.x) * b.x + static_cast<long long>(a.y) * b.y +
         static_cast<long long>(a.z) * b.z;
}
constexpr IVec3 cross(const IVec3& a, const IVec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
constexpr int norm_inf(const IVec3& a) {
  auto ab = [](int v) { return v < 0 ? -v : v; };
  int m = ab(a.x);
  if (ab(a.y) > m) m = ab(a.y);
  if (ab(a.z) > m) m = ab(a.z);
  return m;
}
constexpr long long norm2(const IVec3& a) { return dot(a, a); }
inline Vec3 to_vec(const IVec3& a) { return {double(a.x), double(a.y), double(a.z)}; }
inline Vec3 unit(const IVec3& a) { return normalized(to_vec(a)); }

/// Divides out the gcd of the components.
inline IVec3 primitive(const IVec3& a) {
  int g = std::gcd(std::gcd(a.x, a.y), a.z);
  if (g == 0) return a;
  return {a.x / g, a.y / g, a.z / g};
}

/// Flips the sign so that the first nonzero component is positive.
constexpr IVec3 sign_canonical(const IVec3& a) {
  if (a.x < 0 || (a.x == 0 && (a.y < 0 || (a.y == 0 && a.z < 0)))) return -a;
  return a;
}

/// Angle between the undirected lines spanned by a and b.
inline double line_angle(const Vec3& a, const Vec3& b) {
  double c = std::abs(dot(a, b)) / (norm(a) * norm(b));
  return std::acos(std::min(1.0, c));
}

/// Completes a unit vector to a right-handed orthonormal frame. The helper
/// axis is the standard basis vector least aligned with nu.
inline std::array<Vec3, 3> complete_frame(const Vec3& nu) {
  const double a[3] = {std::abs(nu.x), std::abs(nu.y), std::abs(nu.z)};
  int k = 0;
  if (a[1] < a[k]) k = 1;
  if (a[2] < a[k]) k = 2;
  Vec3 e;
  e[k] = 1.0;
  Vec3 n2 = normalized(cross(nu, e));
  Vec3 n3 = cross(nu, n2);
  return {nu, n2, n3};
}

}  // namespace ellipt3d
