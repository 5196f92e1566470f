#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <json.hpp>

#include "hoist/driver.hpp"

using json = nlohmann::json;

namespace {

hoist::Problem problem_from_name(const std::string& name, const json& ov) {
  using namespace hoist;
  Problem prob;
  if (name == "vburg-straight") {
    prob = make_vburg_straight();
  } else if (name == "vburg-steady") {
    const int family = ov.value("family", 2);
    const int phat = ov.value("phat", 4);
    const double nu = ov.value("nu", 0.1);
    prob = make_vburg_steady(family, phat, nu);
  } else if (name == "vburg-curved") {
    prob = make_vburg_curved();
  } else if (name == "ns-flat-plate") {
    prob = make_ns_flat_plate();
  } else if (name == "ns-cylinder") {
    prob = make_ns_cylinder();
  } else {
    throw std::runtime_error("unknown problem preset: " + name);
  }
  return prob;
}

void apply_overrides(hoist::Problem& prob, const json& ov) {
  using hoist::ContinuationSchedule;
  if (ov.contains("solver")) {
    const json& s = ov["solver"];
    auto& c = prob.solver;
    c.test_enrichment = s.value("test_enrichment", c.test_enrichment);
    c.kappa = s.value("kappa", c.kappa);
    c.theta_l = s.value("theta_l", c.theta_l);
    c.theta_u = s.value("theta_u", c.theta_u);
    c.eps_mod = s.value("eps_mod", c.eps_mod);
    c.omega_mod = s.value("omega_mod", c.omega_mod);
    c.n_ptc = s.value("n_ptc", c.n_ptc);
    c.C_l = s.value("C_l", c.C_l);
    c.C_u = s.value("C_u", c.C_u);
    c.gamma_hat = s.value("gamma_hat", c.gamma_hat);
    c.eta1 = s.value("eta1", c.eta1);
    c.eta2 = s.value("eta2", c.eta2);
    c.lambda_wall = s.value("lambda_wall", c.lambda_wall);
    c.c_ip = s.value("c_ip", c.c_ip);
    c.max_iters = s.value("max_iters", c.max_iters);
    c.opt_tol = s.value("opt_tol", c.opt_tol);
    c.feas_tol = s.value("feas_tol", c.feas_tol);
    c.freeze_mesh = s.value("freeze_mesh", c.freeze_mesh);
    if (s.contains("emode"))
      c.emode = s["emode"] == "inverse-volume"
                    ? hoist::YoungsModulusMode::InverseVolume
                    : hoist::YoungsModulusMode::EnrichedResidual;
  }
  if (ov.contains("continuation")) {
    const json& s = ov["continuation"];
    auto& sch = prob.schedule;
    if (s.contains("values")) {
      sch.values = s["values"].get<std::vector<double>>();
      sch.budgets.assign(sch.values.size(), s.value("budget", 20));
    } else if (s.contains("stages")) {
      const int n = s["stages"].get<int>();
      const double from = s.value("from", sch.values.front());
      const double to = s.value("to", sch.values.back());
      sch.values.clear();
      sch.budgets.clear();
      for (int i = 0; i < n; ++i) {
        sch.values.push_back(n == 1 ? to
                                    : from + (to - from) * i / double(n - 1));
        sch.budgets.push_back(s.value("budget", 20));
      }
    } else if (s.contains("budget")) {
      for (auto& b : sch.budgets) b = s["budget"].get<int>();
    }
    if (s.contains("budgets"))
      sch.budgets = s["budgets"].get<std::vector<int>>();
  }
  if (ov.contains("adapt")) {
    const json& s = ov["adapt"];
    auto& a = prob.adapt;
    a.tau = s.value("tau", a.tau);
    a.p_max = s.value("p_max", a.p_max);
    a.eps_hat = s.value("eps_hat", a.eps_hat);
    a.j_max = s.value("j_max", a.j_max);
    a.budget = s.value("budget", a.budget);
    a.elevate_q2 = s.value("elevate_q2", a.elevate_q2);
    a.final_ptc = s.value("final_ptc", a.final_ptc);
    a.final_ptc_tol = s.value("final_ptc_tol", a.final_ptc_tol);
    if (s.contains("indicator")) {
      const std::string k = s["indicator"];
      a.indicator = k == "uwr"   ? hoist::IndicatorKind::Uwr
                    : k == "dwr" ? hoist::IndicatorKind::Dwr
                                 : hoist::IndicatorKind::Fbs;
    }
  }
  if (ov.contains("init")) {
    const json& s = ov["init"];
    prob.init.fv_cells = s.value("fv_cells", prob.init.fv_cells);
    prob.init.fv_dt = s.value("fv_dt", prob.init.fv_dt);
    prob.init.av_sweeps = s.value("av_sweeps", prob.init.av_sweeps);
    prob.init.ptc_tol = s.value("ptc_tol", prob.init.ptc_tol);
    prob.init.ptc_steps = s.value("ptc_steps", prob.init.ptc_steps);
  }
  if (ov.contains("space") && ov["space"].contains("p")) {
    const int p = ov["space"]["p"].get<int>();
    prob.p0.assign(prob.p0.size(), p);
  }
}

struct LoadedConfig {
  hoist::Problem prob;
  std::string outdir;
  std::uint64_t hash = 0;
};

LoadedConfig load_config(const std::string& path, const std::string& out_cli) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  json cfg;
  try {
    cfg = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config parse error at byte " +
                             std::to_string(e.byte) + ": " + e.what());
  }
  if (!cfg.contains("problem"))
    throw std::runtime_error("config is missing the \"problem\" key");
  LoadedConfig lc;
  const json ov = cfg.value("overrides", json::object());
  lc.prob = problem_from_name(cfg["problem"].get<std::string>(), ov);
  apply_overrides(lc.prob, ov);
  lc.hash = hoist::fnv1a_hash(text);

  std::string outroot = "hoist_out";
  if (const char* env = std::getenv("HOIST_OUT_ROOT")) outroot = env;
  lc.outdir = !out_cli.empty()
                  ? out_cli
                  : cfg.value("output", json::object())
                        .value("dir", outroot + "/" + lc.prob.name);
  return lc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rp-adaptive implicit shock tracking for viscous flows"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint_path;
  int threads = 1;
  std::string log_level = "info";
  int max_iters_override = -1;

  app.add_option("--threads", threads, "assembly thread count");
  app.add_option("--log-level", log_level, "quiet|info|debug");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--max-iters-override", max_iters_override,
                 "cap every SQP stage budget");

  auto* run = app.add_subcommand("run", "full continuation + p-adaptivity");
  run->add_option("config", config_path, "config file")->required();

  auto* solvedg = app.add_subcommand("solve-dg", "fixed-mesh PTC solve");
  solvedg->add_option("config", config_path, "config file")->required();

  auto* indic = app.add_subcommand("indicators",
                                   "error indicators at a checkpoint");
  indic->add_option("config", config_path, "config file")->required();
  indic->add_option("checkpoint", checkpoint_path, "checkpoint file")
      ->required();

  auto* qoi = app.add_subcommand("qoi", "quantities of interest");
  qoi->add_option("config", config_path, "config file")->required();
  qoi->add_option("checkpoint", checkpoint_path, "checkpoint file")
      ->required();

  auto* exp = app.add_subcommand("export", "visualization export");
  exp->add_option("config", config_path, "config file")->required();
  exp->add_option("checkpoint", checkpoint_path, "checkpoint file")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    LoadedConfig lc = load_config(config_path, out_dir);
    if (max_iters_override >= 0)
      for (auto& b : lc.prob.schedule.budgets)
        b = std::min(b, max_iters_override);
    const bool quiet = log_level == "quiet";

    if (run->parsed()) {
      hoist::Run r(std::move(lc.prob), lc.outdir, threads);
      r.initialize();
      r.phoistc();
      hoist::save_checkpoint(lc.outdir + "/final.ck", r.checkpoint());
      if (!quiet)
        std::cout << "run complete: " << r.history().size()
                  << " SQP iterations, output in " << lc.outdir << "\n";
      return 0;
    }
    if (solvedg->parsed()) {
      hoist::Run r(std::move(lc.prob), lc.outdir, threads);
      const bool ok = r.solve_dg(1e-8, 200);
      hoist::save_checkpoint(lc.outdir + "/dg.ck", r.checkpoint());
      if (!quiet)
        std::cout << "solve-dg " << (ok ? "converged" : "did not converge")
                  << "\n";
      return ok ? 0 : 1;
    }

    // checkpoint-based subcommands
    hoist::Checkpoint ck = hoist::load_checkpoint(checkpoint_path);
    hoist::Run r(std::move(lc.prob), lc.outdir, threads);
    r.restore(ck);
    const Eigen::VectorXd x = r.coords();
    if (indic->parsed()) {
      const hoist::IndicatorField uwr =
          hoist::indicator_uwr(r.assembler(), r.u(), x);
      std::map<std::string, Eigen::VectorXd> fields{{"indicator_uwr", uwr.s}};
      hoist::export_vtk(lc.outdir + "/indicators.vtk", r.topology(),
                        r.assembler().trial(), r.u(), x, 8, fields);
      std::cout << "max uwr indicator: " << uwr.s.maxCoeff() << "\n";
      return 0;
    }
    if (qoi->parsed()) {
      for (const auto& q : r.problem().qois) {
        const double v = r.assembler().qoi(q, r.u(), x);
        std::cout << (q.kind == hoist::QoISpec::Kind::Drag ? "drag"
                      : q.kind == hoist::QoISpec::Kind::HeatFlux
                          ? "integrated-heat-flux"
                          : "volume-integral")
                  << " = " << v << "\n";
      }
      return 0;
    }
    if (exp->parsed()) {
      std::map<std::string, Eigen::VectorXd> fields;
      hoist::export_vtk(lc.outdir + "/solution.vtk", r.topology(),
                        r.assembler().trial(), r.u(), x, 8, fields);
      if (!quiet) std::cout << "wrote " << lc.outdir << "/solution.vtk\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
