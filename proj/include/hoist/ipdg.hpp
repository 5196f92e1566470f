#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <string>
#include <vector>

#include "hoist/claw.hpp"
#include "hoist/fespace.hpp"
#include "hoist/mesh.hpp"

namespace hoist {

// Residual assembly output. R is tested against the enriched space
// (degree p + Delta, unweighted); r is its exact restriction to the
// degree p + delta test space (the square constraint system).
struct Assembly {
  Eigen::VectorXd R;
  Eigen::VectorXd r;
  Eigen::SparseMatrix<double> dR_du, dR_dx;
  Eigen::SparseMatrix<double> dr_du, dr_dx;
};

struct QoISpec {
  enum class Kind { Drag, HeatFlux, VolumeStateIntegral };
  Kind kind = Kind::Drag;
  std::vector<std::string> tags;         // boundary tags (boundary kinds)
  Eigen::Vector2d direction{1.0, 0.0};   // drag: flow direction
  int comp = 0;                          // volume integral: state component
  Eigen::VectorXd box_lo, box_hi;        // volume integral window (optional)
  bool use_lifted = false;               // viscous terms from the lifted flux
};

struct BoundarySample {
  Eigen::VectorXd pos;
  double value;  // pointwise integrand (e.g. normal heat flux)
};

// Interior-penalty DG residual of the transformed conservation law on the
// reference mesh, with exact Jacobians with respect to the flow
// coefficients and the mesh node coordinates.
class IpdgAssembler {
 public:
  IpdgAssembler(ModelVariant model, const MeshTopology& topo,
                const PDistribution& p, int delta, int Delta, double c_ip,
                std::vector<BoundaryCondition> bcs, int nthreads = 1);
  ~IpdgAssembler();
  IpdgAssembler(IpdgAssembler&&) noexcept;

  const MeshTopology& topology() const;
  const ModelVariant& model() const;
  ModelVariant& model();
  const Space& trial() const;
  const Space& test() const;
  const PDistribution& degrees() const;
  int delta() const;
  int test_enrichment() const;
  double c_ip() const;
  const std::vector<BoundaryCondition>& boundary_conditions() const;

  // av: optional per-element artificial viscosity.
  Assembly assemble(const Eigen::VectorXd& u, const Eigen::VectorXd& x,
                    bool jac_u, bool jac_x,
                    const Eigen::VectorXd& av = Eigen::VectorXd()) const;

  // Coefficients of the lifted viscous flux (m*d components per trial-space
  // scalar dof, component-fastest).
  Eigen::VectorXd lift_viscous_flux(const Eigen::VectorXd& u,
                                    const Eigen::VectorXd& x) const;

  double qoi(const QoISpec& spec, const Eigen::VectorXd& u,
             const Eigen::VectorXd& x) const;
  // d(qoi)/du on the trial space (direct differentiation of the viscous
  // terms; used by the dual-weighted indicator).
  Eigen::VectorXd qoi_gradient_u(const QoISpec& spec, const Eigen::VectorXd& u,
                                 const Eigen::VectorXd& x) const;
  std::vector<BoundarySample> qoi_boundary_profile(
      const QoISpec& spec, const Eigen::VectorXd& u,
      const Eigen::VectorXd& x) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Pointwise transformed numerical fluxes, exposed for verification.
// Inviscid: consistent and conservative Lax-Friedrichs-type flux through
// the reference co-normal of `theta`.
Eigen::VectorXd inviscid_numflux(const ModelVariant& model,
                                 const Eigen::VectorXd& wp,
                                 const Eigen::VectorXd& wm,
                                 const Eigen::VectorXd& N,
                                 const Eigen::MatrixXd& theta);

struct ViscousNumFlux {
  Eigen::VectorXd sigma_n;    // (average - penalty) . N
  Eigen::VectorXd penalty_n;  // penalty contribution to sigma_n
};
ViscousNumFlux viscous_numflux(const ModelVariant& model,
                               const Eigen::VectorXd& wp,
                               const Eigen::VectorXd& wm,
                               const Eigen::MatrixXd& qp,
                               const Eigen::MatrixXd& qm,
                               const Eigen::VectorXd& N,
                               const Eigen::MatrixXd& theta_p,
                               const Eigen::MatrixXd& theta_m, double h_face,
                               int p_face, int delta, double c_ip);

// Elements with at least one face on any of the named boundaries.
std::vector<char> wall_elements(const MeshTopology& topo,
                                const std::vector<std::string>& names);

// Elementwise scaling of test-space residual blocks; weight empty = ones.
Eigen::VectorXd apply_elemental_weight(const Space& test,
                                       const Eigen::VectorXd& weight,
                                       const Eigen::VectorXd& R);

}  // namespace hoist
