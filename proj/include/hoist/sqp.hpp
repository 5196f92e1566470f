#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <optional>
#include <string>
#include <vector>

#include "hoist/ipdg.hpp"
#include "hoist/mesh.hpp"

namespace hoist {

enum class YoungsModulusMode { InverseVolume, EnrichedResidual };

struct SolverConfig {
  int test_enrichment = 2;      // Delta
  double kappa = 1e-6;          // mesh penalty
  double theta_l = 0.1;         // step constraint knots
  double theta_u = 10.0;
  double eps_mod = 0.9;         // step-modification acceptance factor
  int omega_mod = 0;            // modification period (0 disables)
  int n_ptc = 5;                // PTC steps per modification
  double C_l = 1.0, C_u = 10.0; // compliance range
  double gamma_hat = 0.0;       // regularization magnitude (0 disables)
  double eta1 = 0.0, eta2 = 1.0;
  double lambda_wall = 1.0;     // residual weighting on wall elements
  std::vector<std::string> wall_names;
  double c_ip = 10.0;
  int max_iters = 100;
  double opt_tol = 1e-8;
  double feas_tol = 1e-8;
  double alpha_min = 1e-6;      // floor when the step constraint returns 0
  double alpha_fail = 1e-8;     // line-search failure threshold
  double armijo_c1 = 1e-4;
  YoungsModulusMode emode = YoungsModulusMode::EnrichedResidual;
  bool freeze_mesh = false;
  bool use_step_constraint = true;

  void validate() const;
};

// Objective evaluation: f = f_err + kappa^2 f_msh with
// f_err = 0.5 ||rho o R||^2 and f_msh = 0.5 ||R_msh||^2.
struct ObjectiveParts {
  double f = 0.0, f_err = 0.0, f_msh = 0.0;
  Eigen::VectorXd R_rho;   // weighted enriched residual
  Eigen::VectorXd R_msh;   // elemental distortion
  Eigen::VectorXd r;       // constraint residual
};

class TrackingProblem {
 public:
  TrackingProblem(IpdgAssembler& assembler, const MeshParametrization& param,
                  const SolverConfig& config);

  ObjectiveParts objective(const Eigen::VectorXd& u,
                           const Eigen::VectorXd& y) const;

  const Eigen::VectorXd& weights() const { return rho_; }
  IpdgAssembler& assembler() const { return *assembler_; }
  const MeshParametrization& parametrization() const { return *param_; }
  const SolverConfig& config() const { return *config_; }

 private:
  IpdgAssembler* assembler_;
  const MeshParametrization* param_;
  const SolverConfig* config_;
  Eigen::VectorXd rho_;
};

// Regularization: D = (dphi/dy)^T K(E) (dphi/dy) and gamma = g–hat /
// (Xi^eta1 k^eta2). E comes from the inverse reference volume or from the
// log-projected enriched residual (sine cutoff onto [C_l, C_u], inverted).
struct Regularization {
  Eigen::SparseMatrix<double> D;
  double gamma = 0.0;
};
Regularization regularization(const TrackingProblem& prob,
                              const Eigen::VectorXd& R_rho,
                              const Eigen::VectorXd& y, int k, double xi);

double regularization_gamma(double gamma_hat, double xi, double eta1, int k,
                            double eta2);

// Young's modulus from the enriched residual (nodal, vertices of the mesh).
Eigen::VectorXd youngs_modulus_from_residual(const Space& test,
                                             const Eigen::VectorXd& R_rho,
                                             double C_l, double C_u);

// Equality-constrained QP via its KKT system; returns (dz, multipliers).
std::pair<Eigen::VectorXd, Eigen::VectorXd> solve_kkt(
    const Eigen::SparseMatrix<double>& B, const Eigen::SparseMatrix<double>& J,
    const Eigen::VectorXd& g, const Eigen::VectorXd& r);

// Largest admissible step: Eq.-iota rule on density and pressure over all
// volume quadrature nodes (models without positivity quantities return 1).
double step_length_constraint(const IpdgAssembler& assembler,
                              const Eigen::VectorXd& u,
                              const Eigen::VectorXd& x,
                              const Eigen::VectorXd& du,
                              const SolverConfig& config);

// The pointwise iota rule (exposed for unit tests).
double iota_rule(double d, double theta_l, double theta_u);

struct IterRow {
  int k = 0;
  double xi = 0.0;
  int j = 0;
  double f = 0.0, f_err = 0.0, f_msh = 0.0;
  double norm_r = 0.0, norm_Rrho = 0.0;
  double alpha = 0.0, alpha_hat = 0.0, gamma = 0.0;
  bool modified = false;
};

struct HoistResult {
  Eigen::VectorXd u, y;
  std::vector<IterRow> history;
  bool converged = false;
  bool failed = false;
  std::string message;
};

// Algorithm: the HOIST iteration at fixed continuation value and degree map.
HoistResult hoist_solve(TrackingProblem& prob, double xi, int j,
                        const Eigen::VectorXd& u0, const Eigen::VectorXd& y0,
                        int max_iters = -1);

void write_history_csv(const std::string& path,
                       const std::vector<IterRow>& rows, bool append);

}  // namespace hoist
