#include "hoist/ptc.hpp"

#include <Eigen/SparseLU>
#include <cmath>

#include "hoist/fespace.hpp"

namespace hoist {

PTCResult ptc_solve(const IpdgAssembler& assembler, const Eigen::VectorXd& u0,
                    const Eigen::VectorXd& x, const PTCConfig& config) {
  PTCResult out;
  out.u = u0;
  const Eigen::SparseMatrix<double> M =
      assemble_mass_matrix(assembler.trial(), x);

  SolverConfig sc;
  sc.theta_l = config.theta_l;
  sc.theta_u = config.theta_u;
  sc.use_step_constraint = config.use_step_constraint;

  double tau = config.tau0;
  double rnorm_prev = -1.0;
  for (int step = 0; step < config.max_steps; ++step) {
    Assembly a;
    try {
      a = assembler.assemble(out.u, x, true, false, config.av);
    } catch (const NonphysicalState&) {
      out.converged = false;
      return out;
    }
    const double rnorm = a.r.norm();
    out.residual_history.push_back(rnorm);
    if (!std::isfinite(rnorm)) {
      out.converged = false;
      return out;
    }
    if (rnorm <= config.tol) {
      out.converged = true;
      return out;
    }
    if (rnorm_prev > 0.0) {
      tau = std::clamp(tau * rnorm_prev / rnorm, config.tau0, config.tau_max);
    }
    rnorm_prev = rnorm;

    Eigen::SparseMatrix<double> A = a.dr_du;
    A += (M * (1.0 / tau)).pruned();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(A);
    if (lu.info() != Eigen::Success) {
      out.converged = false;
      return out;
    }
    const Eigen::VectorXd du = -lu.solve(a.r);
    double alpha = 1.0;
    if (config.use_step_constraint)
      alpha = std::min(1.0,
                       step_length_constraint(assembler, out.u, x, du, sc));
    out.u += alpha * du;
  }
  // budget exhausted; report the residual at the final iterate
  try {
    const Assembly a = assembler.assemble(out.u, x, false, false, config.av);
    out.residual_history.push_back(a.r.norm());
    out.converged = a.r.norm() <= config.tol;
  } catch (const NonphysicalState&) {
    out.converged = false;
  }
  return out;
}

}  // namespace hoist
