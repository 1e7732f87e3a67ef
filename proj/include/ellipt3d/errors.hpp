#pragma once

#include <stdexcept>
#include <string>

#include "ellipt3d/geometry.hpp"

namespace ellipt3d {

/// Base for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user configuration (unknown problem, invalid parameters, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class DomainTooSmall : public Error {
 public:
  DomainTooSmall(int n, double delta)
      : Error("no lattice node satisfies distance + delta < 0 (n=" + std::to_string(n) +
              ", delta=" + std::to_string(delta) + ")"),
        n(n), delta(delta) {}
  int n;
  double delta;
};

class ProjectionFailure : public Error {
 public:
  explicit ProjectionFailure(const Vec3& p)
      : Error("boundary projection did not converge from (" + std::to_string(p.x) + ", " +
              std::to_string(p.y) + ", " + std::to_string(p.z) + ")"),
        candidate(p) {}
  Vec3 candidate;
};

class EmptyOctant : public Error {
 public:
  EmptyOctant(int node, int octant)
      : Error("node " + std::to_string(node) + ": octant " + std::to_string(octant) +
              " has no candidate neighbor"),
        node(node), octant(octant) {}
  int node;
  int octant;
};

class InfeasibleStencil : public Error {
 public:
  InfeasibleStencil(int node, double residual)
      : Error("node " + std::to_string(node) + ": stencil system residual " +
              std::to_string(residual) + " above tolerance"),
        node(node), residual(residual) {}
  int node;
  double residual;
};

class RayEscaped : public Error {
 public:
  explicit RayEscaped(int node)
      : Error("node " + std::to_string(node) + ": ray left the domain before reaching the interior lattice"),
        node(node) {}
  int node;
};

class NonmonotoneLocal : public Error {
 public:
  explicit NonmonotoneLocal(int node)
      : Error("node " + std::to_string(node) + ": local scheme is not monotone in its own value"),
        node(node) {}
  int node;
};

}  // namespace ellipt3d
