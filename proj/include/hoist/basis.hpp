#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "hoist/element.hpp"

namespace hoist {

// Nodal Lagrange basis of the given degree on a parent element. Values and
// gradients are computed by evaluating an orthonormal modal basis and
// mapping through the inverse Vandermonde matrix at the nodal points.
class NodalBasis {
 public:
  NodalBasis(ParentKind kind, int degree);

  ParentKind kind() const { return kind_; }
  int degree() const { return degree_; }
  int size() const { return size_; }
  // Nodal points, size() x dim.
  const Eigen::MatrixXd& nodes() const { return nodes_; }

  // Basis values at arbitrary parent points: (npts x size).
  Eigen::MatrixXd eval(const Eigen::MatrixXd& pts) const;
  // Parent-coordinate gradients, one (npts x size) matrix per direction.
  std::vector<Eigen::MatrixXd> grad(const Eigen::MatrixXd& pts) const;

  double vandermonde_condition() const { return vcond_; }

 private:
  Eigen::MatrixXd modal_eval(const Eigen::MatrixXd& pts) const;
  std::vector<Eigen::MatrixXd> modal_grad(const Eigen::MatrixXd& pts) const;

  ParentKind kind_;
  int degree_;
  int size_;
  Eigen::MatrixXd nodes_;
  Eigen::PartialPivLU<Eigen::MatrixXd> vander_t_;  // factor of V^T
  double vcond_ = 0.0;
};

// Shared, lazily-built basis instances keyed by (kind, degree).
const NodalBasis& basis_cache(ParentKind kind, int degree);

// Nodal point sets: Gauss-Lobatto on segments/quads, warp&blend on
// triangles (degree 0 uses the centroid).
Eigen::MatrixXd nodal_points(ParentKind kind, int degree);

// Orthonormal Jacobi polynomial P_n^{(a,b)} on [-1,1] and its derivative.
double jacobi_poly(double x, double alpha, double beta, int n);
double jacobi_poly_deriv(double x, double alpha, double beta, int n);

}  // namespace hoist
