#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "hoist/fespace.hpp"
#include "hoist/ptc.hpp"

using namespace hoist;

namespace {

std::mt19937 gen(23);
double runif(double a, double b) {
  std::uniform_real_distribution<double> d(a, b);
  return d(gen);
}

// manufactured steady Burgers problem on (0,1)
struct ManufacturedSetup {
  MeshTopology topo;
  std::unique_ptr<IpdgAssembler> assembler;
  Eigen::VectorXd x;

  explicit ManufacturedSetup(int nelem, int p, int Delta = 0) {
    std::vector<double> br;
    for (int i = 0; i <= nelem; ++i) br.push_back(i / double(nelem));
    topo = segment_mesh(br);
    BurgersSteady model;
    model.nu = 0.1;
    model.manufactured = true;
    std::vector<BoundaryCondition> bcs(topo.boundary_names.size());
    for (auto& bc : bcs) {
      bc.kind = BCKind::DirichletState;
      bc.field.profile = StateField::Profile::Sine;
      bc.field.a = model.ms_a;
      bc.field.b = 1.0;
      bc.field.c = model.ms_b;
    }
    assembler = std::make_unique<IpdgAssembler>(
        model, topo, PDistribution(topo.nelems(), p), 0, Delta, 10.0, bcs);
    x = topo.flat_ref_coords();
  }
};

}  // namespace

TEST_CASE("PTC converges Newton-fast with a huge pseudo-timestep") {
  ManufacturedSetup ms(8, 2);
  const Space& trial = ms.assembler->trial();
  Eigen::VectorXd u0 = interpolate(trial, ms.x, [](const Eigen::VectorXd& pt) {
    Eigen::VectorXd w(1);
    w(0) = 1.5 + std::sin(2.0 * M_PI * pt(0));
    return w;
  });
  // perturb slightly so there is something to solve
  for (int i = 0; i < u0.size(); ++i) u0(i) += runif(-0.05, 0.05);

  PTCConfig cfg;
  cfg.tau0 = 1e12;  // effectively pure Newton
  cfg.tol = 1e-12;
  cfg.max_steps = 20;
  const PTCResult res = ptc_solve(*ms.assembler, u0, ms.x, cfg);
  CHECK(res.converged);
  // quadratic convergence: residual roughly squares once in the basin
  const auto& h = res.residual_history;
  REQUIRE(h.size() >= 3);
  bool quadratic = false;
  for (size_t i = 0; i + 1 < h.size(); ++i)
    if (h[i] < 1e-3 && h[i + 1] < 5.0 * h[i] * h[i] + 1e-14) quadratic = true;
  CHECK(quadratic);
}

TEST_CASE("already converged input returns unchanged") {
  ManufacturedSetup ms(6, 2);
  PTCConfig solve_cfg;
  solve_cfg.tau0 = 1e10;
  solve_cfg.tol = 1e-12;
  const Space& trial = ms.assembler->trial();
  Eigen::VectorXd u0 = interpolate(trial, ms.x, [](const Eigen::VectorXd& pt) {
    Eigen::VectorXd w(1);
    w(0) = 1.5 + std::sin(2.0 * M_PI * pt(0));
    return w;
  });
  const PTCResult sol = ptc_solve(*ms.assembler, u0, ms.x, solve_cfg);
  REQUIRE(sol.converged);

  PTCConfig cfg;
  cfg.tol = 1e-10;
  const PTCResult res = ptc_solve(*ms.assembler, sol.u, ms.x, cfg);
  CHECK(res.converged);
  CHECK((res.u - sol.u).lpNorm<Eigen::Infinity>() == 0.0);  // bitwise
}

TEST_CASE("large pseudo-timestep reproduces the pure Newton step") {
  ManufacturedSetup ms(6, 2);
  const Space& trial = ms.assembler->trial();
  Eigen::VectorXd u0 = interpolate(trial, ms.x, [](const Eigen::VectorXd& pt) {
    Eigen::VectorXd w(1);
    w(0) = 1.5 + 0.8 * std::sin(2.0 * M_PI * pt(0));
    return w;
  });
  // one PTC step with tau = 1e12
  PTCConfig cfg;
  cfg.tau0 = 1e12;
  cfg.max_steps = 1;
  cfg.tol = 0.0;
  const PTCResult res = ptc_solve(*ms.assembler, u0, ms.x, cfg);
  // direct Newton step
  const Assembly a = ms.assembler->assemble(u0, ms.x, true, false);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(a.dr_du);
  const Eigen::VectorXd unewton = u0 - lu.solve(a.r);
  CHECK((res.u - unewton).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("mass matrix is block diagonal and SPD") {
  ManufacturedSetup ms(4, 3);
  const Eigen::SparseMatrix<double> M =
      assemble_mass_matrix(ms.assembler->trial(), ms.x);
  const Eigen::MatrixXd Md(M);
  CHECK((Md - Md.transpose()).lpNorm<Eigen::Infinity>() < 1e-14);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Md);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
  // block structure: no coupling across element dof ranges
  const Space& trial = ms.assembler->trial();
  for (int c = 0; c < Md.cols(); ++c)
    for (int r = 0; r < Md.rows(); ++r) {
      if (Md(r, c) == 0.0) continue;
      int er = -1, ec = -1;
      for (int e = 0; e < ms.topo.nelems(); ++e) {
        if (r >= trial.offset[e] && r < trial.offset[e] + trial.elem_ndof(e))
          er = e;
        if (c >= trial.offset[e] && c < trial.offset[e] + trial.elem_ndof(e))
          ec = e;
      }
      CHECK(er == ec);
    }
}
