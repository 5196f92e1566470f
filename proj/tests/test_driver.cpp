#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "hoist/driver.hpp"

using namespace hoist;

TEST_CASE("finite-volume reference solver") {
  // constant initial condition is preserved exactly
  {
    FVConfig fc;
    fc.x0 = 0.0;
    fc.x1 = 1.0;
    fc.cells = 50;
    fc.nu = 1e-3;
    fc.left_value = 0.4;
    fc.right_value = 0.4;
    BurgersFV fv(fc, [](double) { return 0.4; });
    fv.run(0.5, 1e-3);
    CHECK((fv.cells().array() - 0.4).abs().maxCoeff() < 1e-14);
  }
  // self-convergence at second order on a smooth monotone profile
  {
    auto run_case = [](int cells) {
      FVConfig fc;
      fc.x0 = 0.0;
      fc.x1 = 1.0;
      fc.cells = cells;
      fc.nu = 0.02;
      fc.order = 2;
      auto ic = [](double x) { return 1.2 - 0.5 * std::tanh((x - 0.35) / 0.15); };
      fc.left_value = ic(0.0);
      fc.right_value = ic(1.0);
      BurgersFV fv(fc, ic);
      const double dx = 1.0 / cells;
      const double dt_target =
          std::min(0.3 * dx / 2.0, 0.3 * dx * dx / (2.0 * fc.nu));
      const int steps = static_cast<int>(std::ceil(0.2 / dt_target));
      fv.run(0.2, 0.2 / steps, steps);
      return fv;
    };
    const BurgersFV ref = run_case(4000);
    double err[2];
    int idx = 0;
    for (int cells : {500, 1000}) {
      const BurgersFV& fv = run_case(cells);
      double acc = 0.0;
      for (int i = 0; i < 200; ++i) {
        const double x = (i + 0.5) / 200.0;
        acc += std::abs(fv.sample(x) - ref.sample(x));
      }
      err[idx++] = acc / 200.0;
    }
    const double rate = std::log2(err[0] / err[1]);
    CHECK(rate >= 1.6);
    CHECK(rate <= 2.2);
  }
  // the paper's reference settings run stably
  {
    FVConfig fc;
    fc.x0 = 0.0;
    fc.x1 = 1.0;
    fc.cells = 2000;
    fc.nu = 1e-4;
    auto ic = [](double x) { return std::sin(2.0 * M_PI * x) / M_PI + 0.2; };
    fc.left_value = 0.2;
    fc.right_value = 0.2;
    BurgersFV fv(fc, ic);
    fv.run(0.1, 5e-4, 20);
    CHECK(fv.cells().allFinite());
    CHECK(fv.cells().maxCoeff() < 0.6);
  }
  // CFL violation is flagged
  {
    FVConfig fc;
    fc.cells = 100;
    fc.left_value = 2.0;
    fc.right_value = 2.0;
    BurgersFV fv(fc, [](double) { return 2.0; });
    CHECK_THROWS(fv.run(1.0, 0.5));
  }
}

TEST_CASE("continuation schedules validate monotonicity") {
  ContinuationSchedule s;
  s.kind = ContinuationSchedule::Kind::Viscosity;
  s.values = {1e-3, 5e-4, 1e-4};
  s.budgets = {10, 10, 10};
  s.validate();
  s.values = {1e-4, 1e-3};
  s.budgets = {10, 10};
  CHECK_THROWS(s.validate());
  s.kind = ContinuationSchedule::Kind::Reynolds;
  s.validate();  // nondecreasing ok
  s.values = {1e3, 1e2};
  CHECK_THROWS(s.validate());
  s.values = {};
  s.budgets = {};
  CHECK_THROWS(s.validate());
}

TEST_CASE("continuation parameter application") {
  ModelVariant m = BurgersSpaceTime{};
  apply_continuation(m, ContinuationSchedule::Kind::Viscosity, 3.5e-4);
  CHECK(std::get<BurgersSpaceTime>(m).nu == 3.5e-4);
  NavierStokes2D ns;
  ns.mu_reference_speed = 5.0;
  ModelVariant mv = ns;
  apply_continuation(mv, ContinuationSchedule::Kind::Reynolds, 1e3);
  CHECK(std::get<NavierStokes2D>(mv).mu == doctest::Approx(5e-3));
  CHECK_THROWS(
      apply_continuation(mv, ContinuationSchedule::Kind::Viscosity, 1.0));
}

TEST_CASE("checkpoint round trip is lossless") {
  Problem prob = make_vburg_steady(2, 3, 0.1);
  Run run(prob, "", 1);
  run.initialize();
  Checkpoint ck = run.checkpoint();
  ck.config_hash = fnv1a_hash("some config text");
  save_checkpoint("ck_test.bin", ck);
  const Checkpoint back = load_checkpoint("ck_test.bin");
  CHECK(back.problem == ck.problem);
  CHECK(back.p == ck.p);
  REQUIRE(back.u.size() == ck.u.size());
  for (int i = 0; i < ck.u.size(); ++i) CHECK(back.u(i) == ck.u(i));  // bitwise
  for (int i = 0; i < ck.x.size(); ++i) CHECK(back.x(i) == ck.x(i));
  CHECK(back.config_hash == ck.config_hash);
  CHECK(std::filesystem::exists("ck_test.bin.meta.json"));
  std::filesystem::remove("ck_test.bin");
  std::filesystem::remove("ck_test.bin.meta.json");

  // restore reproduces the state in a fresh run
  Run run2(prob, "", 1);
  run2.restore(ck);
  CHECK((run2.u() - run.u()).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((run2.coords() - run.coords()).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("initializers") {
  // freestream: constant interpolant
  {
    Problem prob = make_vburg_steady(2, 2, 0.1);
    prob.init.kind = InitKind::Freestream;
    prob.init.freestream = Eigen::VectorXd::Constant(1, 0.33);
    Run run(prob, "", 1);
    run.initialize();
    CHECK((run.u().array() - 0.33).abs().maxCoeff() < 1e-14);
  }
  // fv-project of a constant field is exact
  {
    Problem prob = make_vburg_straight();
    // constant boundary/initial data
    StateField cf;
    cf.profile = StateField::Profile::Constant;
    cf.values = Eigen::VectorXd::Constant(1, 0.2);
    for (auto& bc : prob.bcs) bc.field = cf;
    Run run(prob, "", 1);
    run.initialize();
    CHECK((run.u().array() - 0.2).abs().maxCoeff() < 1e-13);
  }
  // space-time fv projection stays within the monotone bound
  {
    Problem prob = make_vburg_straight();
    Run run(prob, "", 1);
    run.initialize();
    CHECK(run.u().allFinite());
    CHECK(run.u().lpNorm<Eigen::Infinity>() < 0.2 + 1.0 / M_PI + 0.1);
  }
}

TEST_CASE("warm-start identity: zero-budget stages pass through") {
  Problem prob = make_vburg_steady(2, 3, 0.1);
  prob.schedule.values = {0.3, 0.2, 0.1};
  prob.schedule.budgets = {0, 0, 15};
  Run staged(prob, "", 1);
  staged.initialize();
  const Eigen::VectorXd u0 = staged.u();
  const Eigen::VectorXd y0 = staged.y();
  staged.hoistc();

  Problem prob1 = make_vburg_steady(2, 3, 0.1);
  prob1.schedule.values = {0.1};
  prob1.schedule.budgets = {15};
  Run direct(prob1, "", 1);
  direct.set_state(u0, y0);
  direct.hoistc();
  CHECK((staged.u() - direct.u()).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((staged.y() - direct.y()).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("phoistc: J_max = 0 equals hoistc; degree maps grow monotonically") {
  Problem prob = make_vburg_steady(3, 2, 0.1);
  prob.schedule.budgets = {20};
  prob.adapt.j_max = 0;
  Run a(prob, "", 1);
  a.initialize();
  a.phoistc();

  Problem prob2 = make_vburg_steady(3, 2, 0.1);
  prob2.schedule.budgets = {20};
  Run b(prob2, "", 1);
  b.initialize();
  b.hoistc();
  CHECK((a.u() - b.u()).lpNorm<Eigen::Infinity>() < 1e-12);

  // two adaptation rounds raise degrees monotonically
  Problem prob3 = make_vburg_steady(3, 2, 0.1);
  prob3.schedule.budgets = {20};
  prob3.adapt.j_max = 2;
  prob3.adapt.budget = 10;
  prob3.adapt.tau = 0.1;
  Run c(prob3, "", 1);
  c.initialize();
  PDistribution p0 = c.degrees();
  c.phoistc();
  const PDistribution& p2 = c.degrees();
  bool any = false;
  for (size_t e = 0; e < p0.size(); ++e) {
    CHECK(p2[e] >= p0[e]);
    any = any || p2[e] > p0[e];
  }
  CHECK(any);
  CHECK(c.adapt_level() == 2);
}

TEST_CASE("eps_hat terminates adaptation immediately when loose") {
  Problem prob = make_vburg_steady(3, 2, 0.1);
  prob.schedule.budgets = {15};
  prob.adapt.j_max = 3;
  prob.adapt.eps_hat = 1e30;
  Run run(prob, "", 1);
  run.initialize();
  run.phoistc();
  CHECK(run.adapt_level() == 0);
  CHECK(run.degrees() == prob.p0);
}

TEST_CASE("vtk export writes a well-formed unstructured grid") {
  Problem prob = make_vburg_steady(2, 2, 0.1);
  Run run(prob, "", 1);
  run.initialize();
  std::map<std::string, Eigen::VectorXd> fields;
  fields["indicator"] = Eigen::VectorXd::Ones(prob.topo.nelems());
  export_vtk("viz_test.vtk", run.topology(), run.assembler().trial(), run.u(),
             run.coords(), 4, fields);
  std::ifstream in("viz_test.vtk");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("# vtk DataFile") == 0);
  CHECK(text.find("DATASET UNSTRUCTURED_GRID") != std::string::npos);
  CHECK(text.find("SCALARS state0 double 1") != std::string::npos);
  CHECK(text.find("SCALARS degree double 1") != std::string::npos);
  CHECK(text.find("SCALARS indicator double 1") != std::string::npos);
  std::filesystem::remove("viz_test.vtk");
}

TEST_CASE("preset geometry sanity") {
  const Problem s = make_vburg_straight();
  CHECK(s.topo.nelems() == 384);
  CHECK(s.schedule.values.size() == 11);
  CHECK(s.schedule.values.front() == doctest::Approx(1e-3));
  CHECK(s.schedule.values.back() == doctest::Approx(1e-4));

  const Problem c = make_vburg_curved();
  CHECK(c.topo.nelems() == 100);
  CHECK(c.schedule.values.size() == 20);

  const Problem cyl = make_ns_cylinder();
  CHECK(cyl.topo.nelems() == 210);
  const Problem fp = make_ns_flat_plate();
  CHECK(fp.topo.nelems() == 300);
}
