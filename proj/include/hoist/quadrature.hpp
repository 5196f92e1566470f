#pragma once

#include <Eigen/Dense>

#include "hoist/element.hpp"

namespace hoist {

// Quadrature rule on a parent element. Points are rows of `points`
// (npts x dim); weights sum to the parent measure.
struct QuadratureRule {
  Eigen::MatrixXd points;
  Eigen::VectorXd weights;
  int size() const { return static_cast<int>(weights.size()); }
};

// Gauss-Jacobi nodes/weights on [-1,1] for weight (1-x)^alpha (1+x)^beta.
void gauss_jacobi(int n, double alpha, double beta, Eigen::VectorXd& x,
                  Eigen::VectorXd& w);

// Gauss-Legendre rule on [0,1].
QuadratureRule gauss_segment(int npts);

// Gauss-Lobatto-Legendre points on [0,1] (n >= 2).
Eigen::VectorXd gauss_lobatto_points(int n);

// Rule exact for polynomials of total degree <= `degree` on the parent
// element of the given kind.
QuadratureRule quadrature(ParentKind kind, int degree);

}  // namespace hoist
