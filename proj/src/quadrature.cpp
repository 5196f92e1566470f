#include "hoist/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace hoist {

void gauss_jacobi(int n, double alpha, double beta, Eigen::VectorXd& x,
                  Eigen::VectorXd& w) {
  if (n < 1) throw std::invalid_argument("gauss_jacobi: n < 1");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  const double ab = alpha + beta;
  for (int k = 0; k < n; ++k) {
    double denom = (2.0 * k + ab) * (2.0 * k + ab + 2.0);
    J(k, k) = denom == 0.0 ? (beta - alpha) / (ab + 2.0)
                           : (beta * beta - alpha * alpha) / denom;
    if (k >= 1) {
      const double num =
          4.0 * k * (k + alpha) * (k + beta) * (k + ab);
      const double den = std::pow(2.0 * k + ab, 2) * (2.0 * k + ab + 1.0) *
                         (2.0 * k + ab - 1.0);
      const double b = std::sqrt(num / den);
      J(k, k - 1) = b;
      J(k - 1, k) = b;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  x = es.eigenvalues();
  const double mu0 = std::pow(2.0, ab + 1.0) * std::tgamma(alpha + 1.0) *
                     std::tgamma(beta + 1.0) / std::tgamma(ab + 2.0);
  w.resize(n);
  for (int k = 0; k < n; ++k) {
    const double v0 = es.eigenvectors()(0, k);
    w(k) = mu0 * v0 * v0;
  }
}

QuadratureRule gauss_segment(int npts) {
  Eigen::VectorXd x, w;
  gauss_jacobi(npts, 0.0, 0.0, x, w);
  QuadratureRule r;
  r.points.resize(npts, 1);
  r.weights.resize(npts);
  for (int i = 0; i < npts; ++i) {
    r.points(i, 0) = 0.5 * (x(i) + 1.0);
    r.weights(i) = 0.5 * w(i);
  }
  return r;
}

Eigen::VectorXd gauss_lobatto_points(int n) {
  if (n < 2) throw std::invalid_argument("gauss_lobatto_points: n < 2");
  Eigen::VectorXd p(n);
  p(0) = 0.0;
  p(n - 1) = 1.0;
  if (n > 2) {
    Eigen::VectorXd x, w;
    gauss_jacobi(n - 2, 1.0, 1.0, x, w);
    for (int i = 0; i < n - 2; ++i) p(i + 1) = 0.5 * (x(i) + 1.0);
  }
  return p;
}

namespace {

// Collapsed-coordinate rule on the unit triangle: Gauss-Legendre in the
// first direction, Gauss-Jacobi(1,0) in the second with the (1-eta) Duffy
// factor absorbed into the weights.
QuadratureRule duffy_triangle(int n) {
  Eigen::VectorXd xg, wg, xj, wj;
  gauss_jacobi(n, 0.0, 0.0, xg, wg);
  gauss_jacobi(n, 1.0, 0.0, xj, wj);
  QuadratureRule r;
  r.points.resize(n * n, 2);
  r.weights.resize(n * n);
  int q = 0;
  for (int j = 0; j < n; ++j) {
    const double eta = 0.5 * (xj(j) + 1.0);
    // (1-x)dx on [-1,1] maps to 4(1-eta)deta on [0,1]
    const double weta = 0.25 * wj(j);
    for (int i = 0; i < n; ++i, ++q) {
      const double xi = 0.5 * (xg(i) + 1.0);
      r.points(q, 0) = xi * (1.0 - eta);
      r.points(q, 1) = eta;
      r.weights(q) = 0.5 * wg(i) * weta;
    }
  }
  return r;
}

}  // namespace

QuadratureRule quadrature(ParentKind kind, int degree) {
  if (degree < 0) throw std::invalid_argument("quadrature: negative degree");
  const int n = degree / 2 + 1;  // 2n-1 >= degree
  switch (kind) {
    case ParentKind::Segment:
      return gauss_segment(n);
    case ParentKind::Triangle:
      return duffy_triangle(n);
    case ParentKind::Quad: {
      const QuadratureRule g = gauss_segment(n);
      QuadratureRule r;
      r.points.resize(n * n, 2);
      r.weights.resize(n * n);
      int q = 0;
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i, ++q) {
          r.points(q, 0) = g.points(i, 0);
          r.points(q, 1) = g.points(j, 0);
          r.weights(q) = g.weights(i) * g.weights(j);
        }
      return r;
    }
  }
  throw std::logic_error("bad parent kind");
}

}  // namespace hoist
