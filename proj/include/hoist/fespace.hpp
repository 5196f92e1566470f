#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <vector>

#include "hoist/mesh.hpp"

namespace hoist {

// Polynomial degree per element.
using PDistribution = std::vector<int>;

// Discontinuous piecewise-polynomial space with a per-element degree map.
// Element dofs are contiguous, node-major with components fastest:
// dof = offset(K) + local_node * ncomp + comp.
struct Space {
  const MeshTopology* topo = nullptr;
  int ncomp = 1;
  std::vector<int> degree;   // per element (base p plus enrichment)
  std::vector<int> offset;   // per element first dof
  int dim = 0;

  int elem_ndof(int e) const {
    return ncomp * basis_size(topo->elements[e].kind, degree[e]);
  }
};

Space build_space(const MeshTopology& topo, const PDistribution& p,
                  int enrichment, int ncomp);

struct FlowCoefficients {
  Eigen::VectorXd u;
};

// Exact transfer between nested degree maps on the same topology (target
// degree >= source degree elementwise).
Eigen::VectorXd prolongate(const Eigen::VectorXd& u, const Space& from,
                           const Space& to);
// Sparse operator form of the same map.
Eigen::SparseMatrix<double> prolongation_matrix(const Space& from,
                                                const Space& to);

// Per-element inclusion of the coarse test space into the enriched one:
// restriction of an enriched residual to the coarse space is C_K^T R_K.
Eigen::MatrixXd inclusion_matrix(ParentKind kind, int coarse_deg,
                                 int fine_deg, int ncomp);

// Block-diagonal mass matrix weighted by the physical volume element
// det(dG/dX); used by PTC and L2 projections.
Eigen::SparseMatrix<double> assemble_mass_matrix(const Space& space,
                                                 const Eigen::VectorXd& x);

// Pointwise evaluation of a DG field at a parent-domain point of an element.
Eigen::VectorXd eval_field(const Space& space, const Eigen::VectorXd& u,
                           int elem, const Eigen::VectorXd& parent_pt);

// Locate the element containing a physical point (Newton on the mapping,
// with bounding-box preselection). Returns element id and parent
// coordinates, or -1 if not found.
struct PointLocation {
  int elem = -1;
  Eigen::VectorXd parent;
};
PointLocation locate_point(const MeshTopology& topo, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& pt, double tol = 1e-10);

// L2 norm over the reference domain of (u - uref(G(X))) where uref is given
// in physical coordinates; quadrature degree 2*p+extra per element.
double l2_error(const Space& space, const Eigen::VectorXd& u,
                const Eigen::VectorXd& x,
                const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>&
                    uref_phys,
                int extra_degree = 4);

// Interpolate a physical-coordinates function onto the space (nodal
// interpolation through the mesh mapping).
Eigen::VectorXd interpolate(const Space& space, const Eigen::VectorXd& x,
                            const std::function<Eigen::VectorXd(
                                const Eigen::VectorXd&)>& f_phys);

}  // namespace hoist
