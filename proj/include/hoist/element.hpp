#pragma once

#include <Eigen/Dense>
#include <array>
#include <stdexcept>

namespace hoist {

enum class ParentKind { Segment, Triangle, Quad };

inline int parent_dim(ParentKind k) { return k == ParentKind::Segment ? 1 : 2; }

inline int parent_nvertices(ParentKind k) {
  switch (k) {
    case ParentKind::Segment: return 2;
    case ParentKind::Triangle: return 3;
    case ParentKind::Quad: return 4;
  }
  throw std::logic_error("bad parent kind");
}

inline int parent_nfaces(ParentKind k) { return parent_nvertices(k); }

inline double parent_measure(ParentKind k) {
  switch (k) {
    case ParentKind::Segment: return 1.0;
    case ParentKind::Triangle: return 0.5;
    case ParentKind::Quad: return 1.0;
  }
  throw std::logic_error("bad parent kind");
}

// Parent vertex coordinates. Segment: [0,1]. Triangle: (0,0),(1,0),(0,1).
// Quad: unit square, counterclockwise.
inline Eigen::Vector2d parent_vertex(ParentKind k, int v) {
  switch (k) {
    case ParentKind::Segment:
      return {v == 0 ? 0.0 : 1.0, 0.0};
    case ParentKind::Triangle: {
      constexpr double c[3][2] = {{0, 0}, {1, 0}, {0, 1}};
      return {c[v][0], c[v][1]};
    }
    case ParentKind::Quad: {
      constexpr double c[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
      return {c[v][0], c[v][1]};
    }
  }
  throw std::logic_error("bad parent kind");
}

// Faces are oriented counterclockwise (2D) so the rotated tangent
// (t1,t2) -> (t2,-t1) is the outward normal. Face f of a 2D element runs
// from vertex f to vertex (f+1) % nv. Segment faces are endpoints.
struct ParentFace {
  std::array<int, 2> vertices;    // endpoint vertex ids (segment: one id used)
  Eigen::Vector2d origin;         // parent coords at s = 0
  Eigen::Vector2d tangent;        // d(point)/ds, s in [0,1]; zero for points
  Eigen::Vector2d normal;         // outward unit normal (1D: +-1 in x)
};

inline ParentFace parent_face(ParentKind k, int f) {
  ParentFace pf;
  if (k == ParentKind::Segment) {
    pf.vertices = {f, f};
    pf.origin = parent_vertex(k, f);
    pf.tangent = {0.0, 0.0};
    pf.normal = {f == 0 ? -1.0 : 1.0, 0.0};
    return pf;
  }
  const int nv = parent_nvertices(k);
  const int a = f, b = (f + 1) % nv;
  pf.vertices = {a, b};
  pf.origin = parent_vertex(k, a);
  pf.tangent = parent_vertex(k, b) - parent_vertex(k, a);
  const Eigen::Vector2d t = pf.tangent.normalized();
  pf.normal = {t.y(), -t.x()};
  return pf;
}

// Dimension of P_p (simplex kinds) or Q_p (quad) in the parent dimension.
inline int basis_size(ParentKind k, int degree) {
  switch (k) {
    case ParentKind::Segment: return degree + 1;
    case ParentKind::Triangle: return (degree + 1) * (degree + 2) / 2;
    case ParentKind::Quad: return (degree + 1) * (degree + 1);
  }
  throw std::logic_error("bad parent kind");
}

}  // namespace hoist
