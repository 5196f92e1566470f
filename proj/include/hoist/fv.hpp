#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace hoist {

// 1D finite-volume solver for viscous Burgers, used to initialize the
// tracking solver (first order) and as the reference for slice
// comparisons (second order MUSCL with superbee limiter, RK4 in time).
struct FVConfig {
  double x0 = 0.0, x1 = 1.0;
  int cells = 100;
  double nu = 0.0;
  int order = 2;              // 1: Godunov upwind, 2: MUSCL/superbee
  double left_value = 0.0;    // Dirichlet ghost values
  double right_value = 0.0;
};

class BurgersFV {
 public:
  BurgersFV(const FVConfig& config,
            const std::function<double(double)>& initial);

  // Advance to t_end with fixed dt (classical RK4); snapshots are stored
  // every `store_every` steps (and always at t_end).
  void run(double t_end, double dt, int store_every = 1);
  // March to steady state; returns the final max |du/dt|.
  double run_steady(double tol, int max_steps);

  double cell_size() const { return dx_; }
  const Eigen::VectorXd& cells() const { return u_; }
  // Piecewise-constant lookup in x, linear interpolation in t.
  double sample(double x, double t) const;
  double sample(double x) const;  // final state

 private:
  Eigen::VectorXd rhs(const Eigen::VectorXd& u) const;

  FVConfig cfg_;
  double dx_;
  Eigen::VectorXd u_;
  std::vector<double> snap_times_;
  std::vector<Eigen::VectorXd> snaps_;
};

}  // namespace hoist
