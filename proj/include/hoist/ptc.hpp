#pragma once

#include <Eigen/Dense>
#include <vector>

#include "hoist/ipdg.hpp"
#include "hoist/sqp.hpp"

namespace hoist {

struct PTCConfig {
  double tau0 = 1e-2;        // initial pseudo-timestep
  double tau_max = 1e12;
  int max_steps = 200;
  double tol = 1e-10;        // target ||r||
  double theta_l = 0.1;      // positivity step constraint knots
  double theta_u = 10.0;
  bool use_step_constraint = true;
  Eigen::VectorXd av;        // optional artificial viscosity per element
};

struct PTCResult {
  Eigen::VectorXd u;
  bool converged = false;
  std::vector<double> residual_history;
};

// Pseudo-transient continuation on a fixed mesh:
// u <- u - (M/dtau + dr/du)^{-1} r, with switched evolution relaxation of
// the pseudo-timestep.
PTCResult ptc_solve(const IpdgAssembler& assembler, const Eigen::VectorXd& u0,
                    const Eigen::VectorXd& x, const PTCConfig& config);

}  // namespace hoist
