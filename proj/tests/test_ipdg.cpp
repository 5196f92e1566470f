#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "hoist/ipdg.hpp"
#include "hoist/quadrature.hpp"

using namespace hoist;

namespace {

std::mt19937 gen(19);
double runif(double a, double b) {
  std::uniform_real_distribution<double> d(a, b);
  return d(gen);
}

Eigen::Vector4d random_ns_state() {
  Eigen::Vector4d w;
  w(0) = runif(0.5, 2.0);
  w(1) = w(0) * runif(-1.0, 1.0);
  w(2) = w(0) * runif(-1.0, 1.0);
  const double p = runif(0.5, 2.0);
  w(3) = p / 0.4 + 0.5 * (w(1) * w(1) + w(2) * w(2)) / w(0);
  return w;
}

Eigen::Matrix2d random_theta() {
  Eigen::Matrix2d t;
  t << runif(0.7, 1.4), runif(-0.2, 0.2), runif(-0.2, 0.2), runif(0.7, 1.4);
  return t;
}

// reference co-normal contraction of the transformed inviscid flux
template <class Model>
Eigen::VectorXd consistent_flux(const Model& mdl, const Eigen::VectorXd& w,
                                const Eigen::VectorXd& N,
                                const Eigen::MatrixXd& theta) {
  constexpr int M = Model::ncomp, D = Model::dim;
  double th[D * D];
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j) th[i * D + j] = theta(i, j);
  MappingAlgebra<double, D> map;
  map.compute(th);
  double f[M * D], fr[M * D];
  mdl.flux_inv(w.data(), f);
  transform_flux<double, M, D>(map, f, fr);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(M);
  for (int c = 0; c < M; ++c)
    for (int j = 0; j < D; ++j) out(c) += fr[c * D + j] * N(j);
  return out;
}

std::vector<BoundaryCondition> outflow_bcs(const MeshTopology& topo) {
  std::vector<BoundaryCondition> bcs(topo.boundary_names.size());
  for (auto& bc : bcs) bc.kind = BCKind::SupersonicOutlet;
  return bcs;
}

// randomly curve the interior of a mesh (physical coordinates only)
Eigen::VectorXd curved_coords(const MeshTopology& topo, double amp) {
  Eigen::VectorXd x = topo.flat_ref_coords();
  std::vector<char> boundary(topo.nnodes(), 0);
  for (const FaceTopo& ft : topo.faces) {
    if (ft.btag < 0) continue;
    const ElementTopo& el = topo.elements[ft.elem[0]];
    const ParentNodeSets& sets = parent_node_sets(el.kind, el.q);
    for (int ln : sets.face_nodes[ft.local_face[0]]) boundary[el.nodes[ln]] = 1;
  }
  for (int n = 0; n < topo.nnodes(); ++n) {
    if (boundary[n]) continue;
    for (int i = 0; i < topo.dim; ++i) x(n * topo.dim + i) += runif(-amp, amp);
  }
  return x;
}

}  // namespace

TEST_CASE("inviscid numerical flux: consistency and conservation") {
  BurgersSpaceTime bst;
  NavierStokes2D ns;
  for (int t = 0; t < 100; ++t) {
    const Eigen::Matrix2d th = random_theta();
    Eigen::Vector2d N(runif(-1, 1), runif(-1, 1));
    N.normalize();
    {
      Eigen::VectorXd w(1), wm(1);
      w << runif(-2, 2);
      wm << runif(-2, 2);
      const Eigen::VectorXd h = inviscid_numflux(bst, w, w, N, th);
      const Eigen::VectorXd f = consistent_flux(bst, w, N, th);
      CHECK(std::abs(h(0) - f(0)) < 1e-13);
      const Eigen::VectorXd a = inviscid_numflux(bst, w, wm, N, th);
      const Eigen::VectorXd b = inviscid_numflux(bst, wm, w, -N, th);
      CHECK(std::abs(a(0) + b(0)) < 1e-12);
    }
    {
      const Eigen::Vector4d wp = random_ns_state(), wm = random_ns_state();
      const Eigen::VectorXd h = inviscid_numflux(ns, wp, wp, N, th);
      const Eigen::VectorXd f = consistent_flux(ns, wp, N, th);
      CHECK((h - f).lpNorm<Eigen::Infinity>() < 1e-12);
      const Eigen::VectorXd a = inviscid_numflux(ns, wp, wm, N, th);
      const Eigen::VectorXd b = inviscid_numflux(ns, wm, wp, -N, th);
      CHECK((a + b).lpNorm<Eigen::Infinity>() < 1e-12);
    }
  }
}

TEST_CASE("stationary Burgers shock sees the exact upwind flux") {
  // w+ = 1, w- = -1, spatial normal: F(1) = F(-1) = 1/2 and the mean wave
  // speed vanishes, so the flux equals the common value up to the
  // dissipation smoothing constant.
  BurgersSpaceTime model;
  Eigen::VectorXd wp(1), wm(1);
  wp << 1.0;
  wm << -1.0;
  const Eigen::Vector2d N(1.0, 0.0);
  const Eigen::VectorXd h =
      inviscid_numflux(model, wp, wm, N, Eigen::Matrix2d::Identity());
  CHECK(std::abs(h(0) - 0.5) <= model.flux_smooth_eps + 1e-12);
}

TEST_CASE("viscous numerical flux and penalty") {
  BurgersSpaceTime model;
  model.nu = 0.37;
  const Eigen::Matrix2d I = Eigen::Matrix2d::Identity();
  const Eigen::Vector2d N(1.0, 0.0);

  // zero jump: penalty 0, average of equal gradients
  Eigen::VectorXd w(1);
  w << 0.8;
  Eigen::MatrixXd q(1, 2);
  q << 1.3, -0.4;
  const ViscousNumFlux v0 =
      viscous_numflux(model, w, w, q, q, N, I, I, 0.5, 2, 0, 10.0);
  CHECK(v0.penalty_n.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(v0.sigma_n(0) == doctest::Approx(model.nu * 1.3));

  // spec example: jump 2, C_IP=10, p=2, delta=0, h=0.5 -> penalty 80 nu
  Eigen::VectorXd wp(1), wm(1);
  wp << 1.0;
  wm << -1.0;
  Eigen::MatrixXd qz = Eigen::MatrixXd::Zero(1, 2);
  const ViscousNumFlux v1 =
      viscous_numflux(model, wp, wm, qz, qz, N, I, I, 0.5, 2, 0, 10.0);
  CHECK(std::abs(v1.penalty_n(0)) ==
        doctest::Approx(80.0 * model.nu).epsilon(1e-13));

  // doubling C_IP doubles the penalty, leaves the average unchanged
  const ViscousNumFlux v2 =
      viscous_numflux(model, wp, wm, q, q, N, I, I, 0.5, 2, 0, 10.0);
  const ViscousNumFlux v3 =
      viscous_numflux(model, wp, wm, q, q, N, I, I, 0.5, 2, 0, 20.0);
  CHECK(v3.penalty_n(0) == doctest::Approx(2.0 * v2.penalty_n(0)));
  CHECK(v3.sigma_n(0) + v3.penalty_n(0) ==
        doctest::Approx(v2.sigma_n(0) + v2.penalty_n(0)));
}

TEST_CASE("free-stream preservation on randomly curved q2 meshes") {
  // Burgers space-time
  {
    MeshTopology topo = rect_mesh(3, 3, 0, 1, 0, 1, ParentKind::Quad, 2);
    const Eigen::VectorXd x = curved_coords(topo, 0.02);
    BurgersSpaceTime model;
    model.nu = 1e-2;
    std::vector<BoundaryCondition> bcs(topo.boundary_names.size());
    for (auto& bc : bcs) {
      bc.kind = BCKind::DirichletState;
      bc.field.profile = StateField::Profile::Constant;
      bc.field.values = Eigen::VectorXd::Constant(1, 0.7);
    }
    IpdgAssembler assembler(model, topo, PDistribution(topo.nelems(), 2), 0,
                            2, 10.0, bcs);
    const Eigen::VectorXd u =
        Eigen::VectorXd::Constant(assembler.trial().dim, 0.7);
    const Assembly a = assembler.assemble(u, x, false, false);
    CHECK(a.R.lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK(a.r.lpNorm<Eigen::Infinity>() < 1e-10);
  }
  // Navier-Stokes with supersonic inlet/outlet at the freestream
  {
    MeshTopology topo = rect_mesh(3, 2, 0, 2, 0, 1, ParentKind::Quad, 2);
    const Eigen::VectorXd x = curved_coords(topo, 0.02);
    NavierStokes2D model;
    model.mu = 1e-2;
    const Eigen::Vector4d winf = ns_freestream(model, 2.5);
    std::vector<BoundaryCondition> bcs(topo.boundary_names.size());
    for (size_t b = 0; b < bcs.size(); ++b) {
      if (topo.boundary_names[b] == "left") {
        bcs[b].kind = BCKind::SupersonicInlet;
        bcs[b].field.profile = StateField::Profile::Constant;
        bcs[b].field.values = winf;
      } else {
        bcs[b].kind = BCKind::SupersonicOutlet;
      }
    }
    IpdgAssembler assembler(model, topo, PDistribution(topo.nelems(), 2), 0,
                            2, 10.0, bcs);
    const Space& trial = assembler.trial();
    Eigen::VectorXd u(trial.dim);
    for (int i = 0; i < trial.dim; i += 4)
      for (int c = 0; c < 4; ++c) u(i + c) = winf(c);
    const Assembly a = assembler.assemble(u, x, false, false);
    CHECK(a.R.lpNorm<Eigen::Infinity>() < 1e-10);
  }
  // triangles as well
  {
    MeshTopology topo = rect_mesh(3, 3, 0, 1, 0, 1, ParentKind::Triangle, 2);
    const Eigen::VectorXd x = curved_coords(topo, 0.01);
    BurgersSpaceTime model;
    model.nu = 1e-2;
    std::vector<BoundaryCondition> bcs = outflow_bcs(topo);
    IpdgAssembler assembler(model, topo, PDistribution(topo.nelems(), 3), 0,
                            2, 10.0, bcs);
    const Eigen::VectorXd u =
        Eigen::VectorXd::Constant(assembler.trial().dim, -0.4);
    const Assembly a = assembler.assemble(u, x, false, false);
    CHECK(a.R.lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("restriction of the enriched residual equals the square residual") {
  // With a globally polynomial state (no jumps) every integrand is a
  // polynomial integrated exactly by both rules, so assembling with
  // Delta = 0 must reproduce the restricted Delta = 2 residual.
  MeshTopology topo = rect_mesh(3, 2, 0, 1, 0, 1, ParentKind::Triangle, 1);
  BurgersSpaceTime model;
  model.nu = 0.05;
  std::vector<BoundaryCondition> bcs = outflow_bcs(topo);
  const PDistribution p(topo.nelems(), 2);
  IpdgAssembler a2(model, topo, p, 0, 2, 10.0, bcs);
  IpdgAssembler a0(model, topo, p, 0, 0, 10.0, bcs);
  const Eigen::VectorXd x = topo.flat_ref_coords();
  // linear state: flux and face integrands stay within both rules' exactness
  const Eigen::VectorXd u = interpolate(
      a2.trial(), x, [&](const Eigen::VectorXd& pt) {
        Eigen::VectorXd w(1);
        w(0) = 0.3 + pt(0) + 0.5 * pt(1);
        return w;
      });
  const Assembly r2 = a2.assemble(u, x, false, false);
  const Assembly r0 = a0.assemble(u, x, false, false);
  CHECK((r2.r - r0.r).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("elemental weighting scales residual blocks exactly") {
  MeshTopology topo = rect_mesh(2, 2, 0, 1, 0, 1, ParentKind::Quad, 1);
  BurgersSpaceTime model;
  model.nu = 0.01;
  std::vector<BoundaryCondition> bcs = outflow_bcs(topo);
  IpdgAssembler assembler(model, topo, PDistribution(topo.nelems(), 2), 0, 2,
                          10.0, bcs);
  const Eigen::VectorXd x = topo.flat_ref_coords();
  Eigen::VectorXd u(assembler.trial().dim);
  for (int i = 0; i < u.size(); ++i) u(i) = runif(-1, 1);
  const Assembly a = assembler.assemble(u, x, false, false);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(topo.nelems());
  w(1) = 3.5;
  const Eigen::VectorXd Rw = apply_elemental_weight(assembler.test(), w, a.R);
  const Space& test = assembler.test();
  for (int e = 0; e < topo.nelems(); ++e)
    for (int k = 0; k < test.elem_ndof(e); ++k) {
      const double expect = (e == 1 ? 3.5 : 1.0) * a.R(test.offset[e] + k);
      CHECK(Rw(test.offset[e] + k) == expect);  // bitwise for weight 1
    }
  // lambda = 1 leaves the residual bitwise unchanged
  const Eigen::VectorXd R1 = apply_elemental_weight(
      assembler.test(), Eigen::VectorXd::Ones(topo.nelems()), a.R);
  for (int i = 0; i < R1.size(); ++i) CHECK(R1(i) == a.R(i));
}

TEST_CASE("interpolated smooth exact solution has a tiny residual") {
  // steady Burgers closed form at p = 8 on an interior element away from
  // the shock
  BurgersSteady model;
  model.nu = 0.1;
  std::vector<double> br;
  for (int i = 0; i <= 10; ++i) br.push_back(-1.0 + 0.2 * i);
  MeshTopology topo = segment_mesh(br);
  std::vector<BoundaryCondition> bcs(topo.boundary_names.size());
  StateField exact;
  exact.profile = StateField::Profile::ViscousShock;
  exact.a = 1.0;
  exact.b = -1.0;
  exact.c = model.nu;
  for (auto& bc : bcs) {
    bc.kind = BCKind::DirichletState;
    bc.field = exact;
  }
  IpdgAssembler assembler(model, topo, PDistribution(topo.nelems(), 8), 0, 2,
                          10.0, bcs);
  const Eigen::VectorXd x = topo.flat_ref_coords();
  const Eigen::VectorXd u = interpolate(
      assembler.trial(), x, [&](const Eigen::VectorXd& pt) {
        Eigen::VectorXd w(1);
        double pos[1] = {pt(0)};
        exact.eval(pos, w.data());
        return w;
      });
  const Assembly a = assembler.assemble(u, x, false, false);
  // element 7 = (0.4, 0.6), interior and away from the shock at x=0
  const Space& test = assembler.test();
  const double rnorm = a.R.segment(test.offset[7], test.elem_ndof(7)).norm();
  CHECK(rnorm < 1e-6);
}

namespace {

void check_jacobians(const IpdgAssembler& assembler, const Eigen::VectorXd& u,
                     const Eigen::VectorXd& x, double tol) {
  const Assembly a = assembler.assemble(u, x, true, true);
  // directional derivatives vs central differences
  for (int trial = 0; trial < 3; ++trial) {
    Eigen::VectorXd du(u.size()), dx(x.size());
    for (int i = 0; i < du.size(); ++i) du(i) = runif(-1, 1);
    for (int i = 0; i < dx.size(); ++i) dx(i) = runif(-1, 1);
    const double h = 1e-6;
    {
      const Assembly ap = assembler.assemble(u + h * du, x, false, false);
      const Assembly am = assembler.assemble(u - h * du, x, false, false);
      const Eigen::VectorXd fd = (ap.R - am.R) / (2 * h);
      const Eigen::VectorXd an = a.dR_du * du;
      CHECK((fd - an).norm() < tol * std::max(1.0, an.norm()));
      const Eigen::VectorXd fdr = (ap.r - am.r) / (2 * h);
      const Eigen::VectorXd anr = a.dr_du * du;
      CHECK((fdr - anr).norm() < tol * std::max(1.0, anr.norm()));
    }
    {
      const Assembly ap = assembler.assemble(u, x + h * dx, false, false);
      const Assembly am = assembler.assemble(u, x - h * dx, false, false);
      const Eigen::VectorXd fd = (ap.R - am.R) / (2 * h);
      const Eigen::VectorXd an = a.dR_dx * dx;
      CHECK((fd - an).norm() < tol * std::max(1.0, an.norm()));
      const Eigen::VectorXd fdr = (ap.r - am.r) / (2 * h);
      const Eigen::VectorXd anr = a.dr_dx * dx;
      CHECK((fdr - anr).norm() < tol * std::max(1.0, anr.norm()));
    }
  }
}

}  // namespace

TEST_CASE("Jacobians match finite differences: Burgers space-time") {
  MeshTopology topo = rect_mesh(2, 2, 0, 1, 0, 1, ParentKind::Quad, 1);
  BurgersSpaceTime model;
  model.nu = 0.05;
  std::vector<BoundaryCondition> bcs(topo.boundary_names.size());
  StateField ic;
  ic.profile = StateField::Profile::Sine;
  ic.a = 0.2;
  ic.b = 1.0 / M_PI;
  ic.c = 2.0 * M_PI;
  for (size_t b = 0; b < bcs.size(); ++b) {
    bcs[b].kind = topo.boundary_names[b] == "top" ? BCKind::SupersonicOutlet
                  : topo.boundary_names[b] == "bottom"
                      ? BCKind::SpaceTimeInitial
                      : BCKind::DirichletState;
    bcs[b].field = ic;
  }
  IpdgAssembler assembler(model, topo, PDistribution(topo.nelems(), 2), 0, 2,
                          10.0, bcs);
  Eigen::VectorXd u(assembler.trial().dim);
  for (int i = 0; i < u.size(); ++i) u(i) = 0.2 + runif(-0.3, 0.3);
  Eigen::VectorXd x = topo.flat_ref_coords();
  for (int i = 0; i < x.size(); ++i) x(i) += runif(-0.02, 0.02);
  check_jacobians(assembler, u, x, 1e-6);
}

TEST_CASE("Jacobians match finite differences: steady Burgers with source") {
  MeshTopology topo = segment_mesh({0.0, 0.3, 0.7, 1.0});
  BurgersSteady model;
  model.nu = 0.2;
  model.manufactured = true;
  std::vector<BoundaryCondition> bcs(topo.boundary_names.size());
  for (auto& bc : bcs) {
    bc.kind = BCKind::DirichletState;
    bc.field.profile = StateField::Profile::Sine;
    bc.field.a = 1.5;
    bc.field.b = 1.0;
    bc.field.c = 2.0 * M_PI;
  }
  IpdgAssembler assembler(model, topo, PDistribution(topo.nelems(), 3), 0, 2,
                          10.0, bcs);
  Eigen::VectorXd u(assembler.trial().dim);
  for (int i = 0; i < u.size(); ++i) u(i) = 1.5 + runif(-0.5, 0.5);
  Eigen::VectorXd x = topo.flat_ref_coords();
  x(2) += 0.03;  // interior breakpoints
  x(1) -= 0.02;
  check_jacobians(assembler, u, x, 1e-6);
}

TEST_CASE("Jacobians match finite differences: Navier-Stokes") {
  MeshTopology topo = rect_mesh(2, 2, 0, 1, 0, 1, ParentKind::Quad, 2);
  NavierStokes2D model;
  model.mu = 0.02;
  const Eigen::Vector4d winf = ns_freestream(model, 2.0);
  std::vector<BoundaryCondition> bcs(topo.boundary_names.size());
  for (size_t b = 0; b < bcs.size(); ++b) {
    const std::string& name = topo.boundary_names[b];
    if (name == "left") {
      bcs[b].kind = BCKind::SupersonicInlet;
      bcs[b].field.profile = StateField::Profile::Constant;
      bcs[b].field.values = winf;
    } else if (name == "bottom") {
      bcs[b].kind = BCKind::NoslipIsothermal;
      bcs[b].wall_temperature = 1.5;
    } else if (name == "top") {
      bcs[b].kind = BCKind::Symmetry;
    } else {
      bcs[b].kind = BCKind::SupersonicOutlet;
    }
  }
  IpdgAssembler assembler(model, topo, PDistribution(topo.nelems(), 2), 0, 2,
                          10.0, bcs);
  const Space& trial = assembler.trial();
  Eigen::VectorXd u(trial.dim);
  for (int i = 0; i < trial.dim; i += 4)
    for (int c = 0; c < 4; ++c) u(i + c) = winf(c) * (1.0 + runif(-0.05, 0.05));
  Eigen::VectorXd x = topo.flat_ref_coords();
  for (int i = 0; i < x.size(); ++i) x(i) += runif(-0.01, 0.01);
  check_jacobians(assembler, u, x, 2e-6);
}

TEST_CASE("adjoint-mode consistency of the Jacobian") {
  MeshTopology topo = rect_mesh(2, 2, 0, 1, 0, 1, ParentKind::Quad, 1);
  BurgersSpaceTime model;
  std::vector<BoundaryCondition> bcs = outflow_bcs(topo);
  IpdgAssembler assembler(model, topo, PDistribution(topo.nelems(), 2), 0, 2,
                          10.0, bcs);
  Eigen::VectorXd u(assembler.trial().dim);
  for (int i = 0; i < u.size(); ++i) u(i) = runif(-1, 1);
  const Eigen::VectorXd x = topo.flat_ref_coords();
  const Assembly a = assembler.assemble(u, x, true, false);
  for (int t = 0; t < 5; ++t) {
    Eigen::VectorXd v(u.size()), w(a.R.size());
    for (int i = 0; i < v.size(); ++i) v(i) = runif(-1, 1);
    for (int i = 0; i < w.size(); ++i) w(i) = runif(-1, 1);
    const double a1 = w.dot(a.dR_du * v);
    const double a2 = v.dot(a.dR_du.transpose() * w);
    CHECK(a1 == doctest::Approx(a2).epsilon(1e-12));
  }
}

TEST_CASE("lifted viscous flux") {
  // globally linear state, identity mesh: sigma = nu grad u exactly
  MeshTopology topo = rect_mesh(2, 2, 0, 1, 0, 1, ParentKind::Quad, 1);
  BurgersSpaceTime model;
  model.nu = 0.3;
  std::vector<BoundaryCondition> bcs = outflow_bcs(topo);
  IpdgAssembler assembler(model, topo, PDistribution(topo.nelems(), 2), 0, 2,
                          10.0, bcs);
  const Eigen::VectorXd x = topo.flat_ref_coords();
  const Space& trial = assembler.trial();
  const Eigen::VectorXd u =
      interpolate(trial, x, [](const Eigen::VectorXd& pt) {
        Eigen::VectorXd w(1);
        w(0) = 2.0 * pt(0) - 0.7 * pt(1);
        return w;
      });
  const Eigen::VectorXd sigma = assembler.lift_viscous_flux(u, x);
  for (int e = 0; e < topo.nelems(); ++e) {
    const int n = trial.elem_ndof(e);
    for (int j = 0; j < n; ++j) {
      CHECK(sigma((trial.offset[e] + j) * 2 + 0) ==
            doctest::Approx(model.nu * 2.0).epsilon(1e-10));
      CHECK(std::abs(sigma((trial.offset[e] + j) * 2 + 1)) < 1e-10);
    }
  }

  // piecewise constant with a jump: lifting flips sign with the jump
  Eigen::VectorXd ustep(trial.dim);
  for (int e = 0; e < topo.nelems(); ++e)
    for (int j = 0; j < trial.elem_ndof(e); ++j)
      ustep(trial.offset[e] + j) = (e % 2 == 0) ? 1.0 : -1.0;
  const Eigen::VectorXd s1 = assembler.lift_viscous_flux(ustep, x);
  const Eigen::VectorXd s2 = assembler.lift_viscous_flux(-ustep, x);
  CHECK(s1.lpNorm<Eigen::Infinity>() > 1e-3);
  CHECK((s1 + s2).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("quantities of interest") {
  // closed wall with uniform pressure: drag = 0
  {
    MeshTopology topo = cylinder_omesh(12, 3, 2);
    NavierStokes2D model;
    model.mu = 0.0;  // pressure term only
    std::vector<BoundaryCondition> bcs(topo.boundary_names.size());
    for (size_t b = 0; b < bcs.size(); ++b) {
      bcs[b].kind = topo.boundary_names[b] == "wall"
                        ? BCKind::NoslipAdiabatic
                        : BCKind::SupersonicOutlet;
    }
    IpdgAssembler assembler(model, topo, PDistribution(topo.nelems(), 1), 0,
                            1, 10.0, bcs);
    const Eigen::VectorXd x = topo.flat_ref_coords();
    Eigen::Vector4d w0(1.0, 0.0, 0.0, 2.5);
    const Eigen::VectorXd u = interpolate(
        assembler.trial(), x, [&](const Eigen::VectorXd&) {
          return Eigen::VectorXd(w0);
        });
    QoISpec drag;
    drag.kind = QoISpec::Kind::Drag;
    drag.tags = {"wall"};
    drag.direction = Eigen::Vector2d(1.0, 0.0);
    CHECK(std::abs(assembler.qoi(drag, u, x)) < 1e-11);
  }
  // linear temperature field: pointwise heat flux +1 on the bottom wall
  {
    MeshTopology topo = rect_mesh(3, 2, 0, 1, 0, 1, ParentKind::Quad, 1);
    NavierStokes2D model;
    model.gas_constant = 1.0;
    model.prandtl = 0.72;
    // kappa = mu cp / Pr = 1  =>  mu = Pr / cp
    model.mu = model.prandtl / model.cp();
    CHECK(model.conductivity() == doctest::Approx(1.0));
    std::vector<BoundaryCondition> bcs(topo.boundary_names.size());
    for (auto& bc : bcs) bc.kind = BCKind::SupersonicOutlet;
    IpdgAssembler assembler(model, topo, PDistribution(topo.nelems(), 2), 0,
                            1, 10.0, bcs);
    const Eigen::VectorXd x = topo.flat_ref_coords();
    // rho = 1, v = 0, T = x2 + 1 (positive): rho E = P/(gamma-1) = R T/0.4
    const Eigen::VectorXd u = interpolate(
        assembler.trial(), x, [&](const Eigen::VectorXd& pt) {
          Eigen::VectorXd w(4);
          w << 1.0, 0.0, 0.0, (pt(1) + 1.0) / 0.4;
          return w;
        });
    QoISpec hf;
    hf.kind = QoISpec::Kind::HeatFlux;
    hf.tags = {"bottom"};
    const auto profile = assembler.qoi_boundary_profile(hf, u, x);
    CHECK(profile.size() > 0);
    for (const BoundarySample& bs : profile)
      CHECK(bs.value == doctest::Approx(1.0).epsilon(1e-10));
    // integrated value = wall length
    CHECK(assembler.qoi(hf, u, x) == doctest::Approx(1.0).epsilon(1e-10));
    // qoi gradient vs finite differences
    const Eigen::VectorXd gq = assembler.qoi_gradient_u(hf, u, x);
    Eigen::VectorXd du(u.size());
    for (int i = 0; i < du.size(); ++i) du(i) = runif(-1, 1);
    const double h = 1e-6;
    const double fd = (assembler.qoi(hf, u + h * du, x) -
                       assembler.qoi(hf, u - h * du, x)) /
                      (2 * h);
    CHECK(gq.dot(du) == doctest::Approx(fd).epsilon(1e-6));
  }
}
