#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "hoist/claw.hpp"

using namespace hoist;

namespace {

std::mt19937 gen(42);

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

}  // namespace

TEST_CASE("Burgers space-time fluxes") {
  BurgersSpaceTime model;
  model.nu = 0.1;

  // zero state -> all fluxes zero
  double w = 0.0, q[2] = {0.0, 0.0}, fi[2], fv[2];
  model.flux_inv(&w, fi);
  model.flux_visc(&w, q, 0.0, fv);
  CHECK(fi[0] == 0.0);
  CHECK(fi[1] == 0.0);
  CHECK(fv[0] == 0.0);
  CHECK(fv[1] == 0.0);

  // phi = 2, inviscid flux (2, 2)
  w = 2.0;
  model.flux_inv(&w, fi);
  CHECK(fi[0] == doctest::Approx(2.0));
  CHECK(fi[1] == doctest::Approx(2.0));

  // steady closed form (phi_L=1, phi_R=-1, nu=0.1) at x=0:
  // phi = 0 and dphi/dx = -1/(2 nu) = -5 (differentiate the logistic
  // profile analytically), so the viscous flux is -0.5
  BurgersSteady steady;
  steady.nu = 0.1;
  const double nu = steady.nu;
  auto phi = [&](double x) { return -1.0 + 2.0 / (1.0 + std::exp(x / nu)); };
  const double h = 1e-6;
  const double dphi_fd = (phi(h) - phi(-h)) / (2.0 * h);
  CHECK(dphi_fd == doctest::Approx(-5.0).epsilon(1e-6));
  double ws = phi(0.0), qs = -1.0 / (2.0 * nu), fvs;
  CHECK(ws == doctest::Approx(0.0));
  steady.flux_visc(&ws, &qs, 0.0, &fvs);
  CHECK(fvs == doctest::Approx(-0.5));
}

TEST_CASE("NS fluxes and auxiliaries") {
  NavierStokes2D model;
  model.gamma = 1.4;
  model.gas_constant = 1.0;

  // at rest: P = 0.4 * 2.5 = 1, momentum diagonal carries the pressure
  double w0[4] = {1.0, 0.0, 0.0, 2.5};
  double fi[8];
  model.flux_inv(w0, fi);
  CHECK(model.pressure(w0) == doctest::Approx(1.0));
  CHECK(fi[1 * 2 + 0] == doctest::Approx(1.0));
  CHECK(fi[2 * 2 + 1] == doctest::Approx(1.0));
  CHECK(fi[0 * 2 + 0] == doctest::Approx(0.0));
  CHECK(fi[1 * 2 + 1] == doctest::Approx(0.0));

  const NSAux aux0 = ns_aux(model, w0);
  CHECK(aux0.pressure == doctest::Approx(1.0));
  CHECK(aux0.temperature == doctest::Approx(1.0));

  // moving state: P = 0.4 (2.5 - 0.5) = 0.8, mass flux (1, .)
  double w1[4] = {1.0, 1.0, 0.0, 2.5};
  model.flux_inv(w1, fi);
  CHECK(model.pressure(w1) == doctest::Approx(0.8));
  CHECK(fi[0 * 2 + 0] == doctest::Approx(1.0));

  // rho=2, v=(1,0)... wait: rho v = 2 -> v = 1; P = 0.4(5 - 1) = 1.6
  double w2[4] = {2.0, 2.0, 0.0, 5.0};
  CHECK(model.pressure(w2) == doctest::Approx(1.6));

  // uniform shear dv1/dx2 = 1, mu = 2 -> tau12 = tau21 = 2, diag 0
  model.mu = 2.0;
  double wsh[4] = {1.0, 0.0, 0.0, 2.5};
  double qsh[8] = {0, 0, 0, 1.0, 0, 0, 0, 0};  // d(rho v1)/dx2 = 1, rho = 1
  double fv[8];
  model.flux_visc(wsh, qsh, 0.0, fv);
  CHECK(fv[1 * 2 + 1] == doctest::Approx(2.0));   // tau_12
  CHECK(fv[2 * 2 + 0] == doctest::Approx(2.0));   // tau_21
  CHECK(fv[1 * 2 + 0] == doctest::Approx(0.0));
  CHECK(fv[2 * 2 + 1] == doctest::Approx(0.0));

  // Mach round trip at M = 5 (state built by inverting the definition)
  const Eigen::Vector4d winf = ns_freestream(model, 5.0);
  model.gas_constant = 1.0 / 1.4;
  const NSAux aux = ns_aux(model, winf.data());
  CHECK(aux.mach == doctest::Approx(5.0).epsilon(1e-12));

  // nonphysical states are flagged
  double wbad[4] = {-1.0, 0.0, 0.0, 2.5};
  CHECK_THROWS_AS(ns_aux(model, wbad), NonphysicalState);
  double wbad2[4] = {1.0, 10.0, 0.0, 2.5};  // kinetic energy > total
  CHECK_THROWS_AS(ns_aux(model, wbad2), NonphysicalState);

  // P from the conservative form equals rho R T (round trip)
  for (int t = 0; t < 20; ++t) {
    const Eigen::Vector4d w = random_ns_state();
    NavierStokes2D m2;
    m2.gas_constant = runif(0.5, 2.0);
    const NSAux a = ns_aux(m2, w.data());
    CHECK(a.pressure ==
          doctest::Approx(w(0) * m2.gas_constant * a.temperature)
              .epsilon(1e-12));
    // e = P / ((gamma-1) rho) consistency with total energy
    const double ke = 0.5 * (w(1) * w(1) + w(2) * w(2)) / w(0);
    CHECK(w(0) * a.internal_energy + ke == doctest::Approx(w(3)));
  }
}

TEST_CASE("viscous flux linearity in the gradient") {
  NavierStokes2D ns;
  BurgersSpaceTime bst;
  for (int t = 0; t < 100; ++t) {
    const double a = runif(-2, 2), b = runif(-2, 2);
    {
      const Eigen::Vector4d w = random_ns_state();
      double q1[8], q2[8], qab[8], f1[8], f2[8], fab[8];
      for (int i = 0; i < 8; ++i) {
        q1[i] = runif(-1, 1);
        q2[i] = runif(-1, 1);
        qab[i] = a * q1[i] + b * q2[i];
      }
      ns.flux_visc(w.data(), q1, 0.0, f1);
      ns.flux_visc(w.data(), q2, 0.0, f2);
      ns.flux_visc(w.data(), qab, 0.0, fab);
      for (int i = 0; i < 8; ++i)
        CHECK(fab[i] == doctest::Approx(a * f1[i] + b * f2[i])
                            .epsilon(1e-11));
    }
    {
      const double w = runif(-2, 2);
      double q1[2] = {runif(-1, 1), runif(-1, 1)};
      double q2[2] = {runif(-1, 1), runif(-1, 1)};
      double qab[2] = {a * q1[0] + b * q2[0], a * q1[1] + b * q2[1]};
      double f1[2], f2[2], fab[2];
      bst.flux_visc(&w, q1, 0.0, f1);
      bst.flux_visc(&w, q2, 0.0, f2);
      bst.flux_visc(&w, qab, 0.0, fab);
      for (int i = 0; i < 2; ++i)
        CHECK(fab[i] == doctest::Approx(a * f1[i] + b * f2[i])
                            .epsilon(1e-11));
    }
  }
}

namespace {

// reference-domain transform of an m x d flux for tests
template <int M, int D>
void transform_ref(const Eigen::Matrix<double, D, D>& theta, const double* F,
                   double* out) {
  MappingAlgebra<double, D> map;
  double th[D * D];
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j) th[i * D + j] = theta(i, j);
  map.compute(th);
  transform_flux<double, M, D>(map, F, out);
}

}  // namespace

TEST_CASE("transform_fields") {
  // identity mapping reproduces physical fluxes
  NavierStokes2D ns;
  for (int t = 0; t < 20; ++t) {
    const Eigen::Vector4d w = random_ns_state();
    double fi[8], fo[8];
    ns.flux_inv(w.data(), fi);
    transform_ref<4, 2>(Eigen::Matrix2d::Identity(), fi, fo);
    for (int i = 0; i < 8; ++i) CHECK(fo[i] == doctest::Approx(fi[i]));
  }

  // diag(2,1) on a scalar flux (a,b): det=2, Theta^{-T} = diag(1/2,1)
  {
    double F[2] = {runif(-1, 1), runif(-1, 1)};
    double out[2];
    Eigen::Matrix2d th = Eigen::Matrix2d::Zero();
    th(0, 0) = 2.0;
    th(1, 1) = 1.0;
    transform_ref<1, 2>(th, F, out);
    CHECK(out[0] == doctest::Approx(F[0]));
    CHECK(out[1] == doctest::Approx(2.0 * F[1]));
  }

  // rotations preserve the Frobenius norm
  for (int t = 0; t < 20; ++t) {
    const double a = runif(0, 2 * M_PI);
    Eigen::Matrix2d rot;
    rot << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    double F[8], out[8];
    for (int i = 0; i < 8; ++i) F[i] = runif(-1, 1);
    transform_ref<4, 2>(rot, F, out);
    double n1 = 0, n2 = 0;
    for (int i = 0; i < 8; ++i) {
      n1 += F[i] * F[i];
      n2 += out[i] * out[i];
    }
    CHECK(std::sqrt(n2) == doctest::Approx(std::sqrt(n1)).epsilon(1e-12));
  }

  // composition: transform by Theta2*Theta1 equals transforming the
  // Theta1-transformed flux by Theta2 (inviscid part)
  for (int t = 0; t < 20; ++t) {
    Eigen::Matrix2d t1, t2;
    t1 << runif(0.5, 2), runif(-0.3, 0.3), runif(-0.3, 0.3), runif(0.5, 2);
    t2 << runif(0.5, 2), runif(-0.3, 0.3), runif(-0.3, 0.3), runif(0.5, 2);
    double F[8], once[8], step1[8], twice[8];
    for (int i = 0; i < 8; ++i) F[i] = runif(-1, 1);
    transform_ref<4, 2>(Eigen::Matrix2d(t2 * t1), F, once);
    transform_ref<4, 2>(t2, F, step1);
    transform_ref<4, 2>(t1, step1, twice);
    for (int i = 0; i < 8; ++i)
      CHECK(twice[i] == doctest::Approx(once[i]).epsilon(1e-11));
  }

  // transformed viscous flux stays linear in the reference gradient
  for (int t = 0; t < 20; ++t) {
    Eigen::Matrix2d th;
    th << runif(0.5, 2), runif(-0.3, 0.3), runif(-0.3, 0.3), runif(0.5, 2);
    MappingAlgebra<double, 2> map;
    double thr[4] = {th(0, 0), th(0, 1), th(1, 0), th(1, 1)};
    map.compute(thr);
    const Eigen::Vector4d w = random_ns_state();
    auto visc_ref = [&](const double* qref, double* out) {
      double qphys[8], f[8];
      physical_gradient<double, 4, 2>(map, qref, qphys);
      ns.flux_visc(w.data(), qphys, 0.0, f);
      transform_flux<double, 4, 2>(map, f, out);
    };
    double q1[8], q2[8], qab[8], f1[8], f2[8], fab[8];
    const double a = runif(-2, 2), b = runif(-2, 2);
    for (int i = 0; i < 8; ++i) {
      q1[i] = runif(-1, 1);
      q2[i] = runif(-1, 1);
      qab[i] = a * q1[i] + b * q2[i];
    }
    visc_ref(q1, f1);
    visc_ref(q2, f2);
    visc_ref(qab, fab);
    for (int i = 0; i < 8; ++i)
      CHECK(fab[i] == doctest::Approx(a * f1[i] + b * f2[i]).epsilon(1e-10));
  }
}

TEST_CASE("boundary ghost states") {
  NavierStokes2D ns;
  const Eigen::Vector4d winf = ns_freestream(ns, 5.0);

  // supersonic inlet prescribes the freestream
  BoundaryCondition inlet;
  inlet.kind = BCKind::SupersonicInlet;
  inlet.field.profile = StateField::Profile::Constant;
  inlet.field.values = winf;
  const Eigen::Vector4d wi = random_ns_state();
  double pos[2] = {0.3, 0.4}, n[2] = {1.0, 0.0}, wg[4];
  ns.ghost(inlet, wi.data(), pos, n, wg);
  for (int c = 0; c < 4; ++c) CHECK(wg[c] == doctest::Approx(winf(c)));

  // isothermal wall T_w / T_inf = 2.5: zero velocity, prescribed T
  BoundaryCondition wall;
  wall.kind = BCKind::NoslipIsothermal;
  wall.wall_temperature = 2.5;  // T_inf = 1 in this nondimensionalization
  ns.ghost(wall, wi.data(), pos, n, wg);
  CHECK(wg[1] == 0.0);
  CHECK(wg[2] == 0.0);
  const NSAux aux = ns_aux(ns, wg);
  CHECK(aux.temperature == doctest::Approx(2.5).epsilon(1e-12));

  // symmetry mirrors the normal velocity
  BoundaryCondition sym;
  sym.kind = BCKind::Symmetry;
  double wsym[4] = {1.0, 1.0, 1.0, 4.0}, nsym[2] = {0.0, 1.0};
  ns.ghost(sym, wsym, pos, nsym, wg);
  CHECK(wg[0] == doctest::Approx(1.0));
  CHECK(wg[1] == doctest::Approx(1.0));
  CHECK(wg[2] == doctest::Approx(-1.0));
  CHECK(wg[3] == doctest::Approx(4.0));

  // supersonic outlet is idempotent
  BoundaryCondition out;
  out.kind = BCKind::SupersonicOutlet;
  double wg2[4];
  ns.ghost(out, wi.data(), pos, n, wg);
  ns.ghost(out, wg, pos, n, wg2);
  for (int c = 0; c < 4; ++c) CHECK(wg2[c] == doctest::Approx(wg[c]));
}

TEST_CASE("dual numbers differentiate the NS flux") {
  NavierStokes2D ns;
  const Eigen::Vector4d w0 = random_ns_state();
  using D4 = Dual<4>;
  D4 w[4];
  for (int c = 0; c < 4; ++c) w[c] = D4::seed(w0(c), c);
  const D4 p = ns.pressure(w);
  const double h = 1e-6;
  for (int c = 0; c < 4; ++c) {
    Eigen::Vector4d wp = w0, wm = w0;
    wp(c) += h;
    wm(c) -= h;
    const double fd = (ns.pressure(wp.data()) - ns.pressure(wm.data())) /
                      (2.0 * h);
    CHECK(p.der[c] == doctest::Approx(fd).epsilon(1e-6));
  }
}
