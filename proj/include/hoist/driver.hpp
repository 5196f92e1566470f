#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "hoist/adapt.hpp"
#include "hoist/fv.hpp"
#include "hoist/ipdg.hpp"
#include "hoist/sqp.hpp"

namespace hoist {

enum class InitKind { Freestream, FvProject, DgSolve, DgAv };

struct InitSpec {
  InitKind kind = InitKind::Freestream;
  int fv_cells = 200;
  double fv_dt = 0.0;        // 0: pick a stable step
  bool fv_steady = false;
  double av_c0 = 1.0;        // initial artificial-viscosity scale
  int av_sweeps = 3;
  double ptc_tol = 1e-8;
  int ptc_steps = 300;
  Eigen::VectorXd freestream;
};

struct ContinuationSchedule {
  enum class Kind { Viscosity, Reynolds };
  Kind kind = Kind::Viscosity;
  std::vector<double> values;
  std::vector<int> budgets;
  void validate() const;
};

struct AdaptConfig {
  IndicatorKind indicator = IndicatorKind::Uwr;
  double tau = 0.1;
  int p_max = 9;
  double eps_hat = 0.0;     // ||R|| target, 0 disables
  int j_max = 0;
  int budget = 50;          // SQP iterations per adaptation round
  bool elevate_q2 = false;  // raise mapping degree after continuation
  int elevate_budget = 50;
  bool final_ptc = false;
  double final_ptc_tol = 1e-9;
  QoISpec qoi;              // dual-weighted indicator functional
};

struct Problem {
  std::string name;
  ModelVariant model;
  MeshTopology topo;
  std::map<std::string, Chart> charts;
  std::vector<BoundaryCondition> bcs;  // per boundary tag
  PDistribution p0;
  ContinuationSchedule schedule;
  SolverConfig solver;
  AdaptConfig adapt;
  InitSpec init;
  std::vector<QoISpec> qois;
};

// Paper problem presets (section-4 setups, desk scale).
Problem make_vburg_straight();
Problem make_vburg_steady(int family, int phat, double nu);
Problem make_vburg_curved();
Problem make_ns_flat_plate();
Problem make_ns_cylinder();

// Set the model parameter driven by continuation (Burgers viscosity or the
// NS dynamic viscosity from a Reynolds number).
void apply_continuation(ModelVariant& model, ContinuationSchedule::Kind kind,
                        double xi);

struct Checkpoint {
  std::string problem;
  MeshTopology topo;
  PDistribution p;
  Eigen::VectorXd u, x, y;
  double xi = 0.0;
  int j = 0;
  std::uint64_t config_hash = 0;
};
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);
std::uint64_t fnv1a_hash(const std::string& data);

void export_vtk(const std::string& path, const MeshTopology& topo,
                const Space& space, const Eigen::VectorXd& u,
                const Eigen::VectorXd& x, int subdiv,
                const std::map<std::string, Eigen::VectorXd>& cell_fields);

// Orchestration of one experiment: initialization, continuation
// (Algorithm HOISTC), p-adaptivity (Algorithm pHOISTC), snapshots.
class Run {
 public:
  Run(Problem problem, std::string outdir, int nthreads = 1);

  void initialize();
  // Continuation loop at the current adaptation level.
  void hoistc();
  // Full continuation + p-adaptivity loop, with optional mapping-degree
  // elevation and final fixed-mesh PTC.
  void phoistc();
  // Fixed-mesh PTC solve at the first continuation value.
  bool solve_dg(double tol, int max_steps);

  const Problem& problem() const { return prob_; }
  const MeshTopology& topology() const { return topo_; }
  const PDistribution& degrees() const { return p_; }
  const MeshParametrization& parametrization() const { return param_; }
  const IpdgAssembler& assembler() const { return *assembler_; }
  const Eigen::VectorXd& u() const { return u_; }
  const Eigen::VectorXd& y() const { return y_; }
  Eigen::VectorXd coords() const { return param_.apply(y_); }
  const std::vector<IterRow>& history() const { return history_; }
  int adapt_level() const { return j_; }
  double xi() const { return xi_; }

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ck);
  // Overwrite the current iterate (warm starts, tests).
  void set_state(const Eigen::VectorXd& u, const Eigen::VectorXd& y);
  void write_snapshot(const std::string& label);

  // Evaluate the solution at a physical point (slice sampling).
  Eigen::VectorXd sample(const Eigen::VectorXd& pt) const;

 private:
  void rebuild(bool keep_u);
  void run_stage(double xi, int budget);

  Problem prob_;
  std::string outdir_;
  int nthreads_;
  MeshTopology topo_;
  PDistribution p_;
  MeshParametrization param_;
  std::unique_ptr<IpdgAssembler> assembler_;
  std::unique_ptr<TrackingProblem> tracking_;
  Eigen::VectorXd u_, y_;
  double xi_ = 0.0;
  int j_ = 0;
  std::vector<IterRow> history_;
};

}  // namespace hoist
