#include "hoist/sqp.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <cmath>
#include <fstream>

#include "hoist/dual.hpp"
#include "hoist/ptc.hpp"
#include "hoist/quadrature.hpp"

namespace hoist {

void SolverConfig::validate() const {
  if (!(theta_l > 0.0 && theta_l < theta_u))
    throw std::invalid_argument("require 0 < theta_l < theta_u");
  if (!(eps_mod > 0.0 && eps_mod < 1.0))
    throw std::invalid_argument("require 0 < eps_mod < 1");
  if (!(C_l < C_u)) throw std::invalid_argument("require C_l < C_u");
  if (!(kappa > 0.0)) throw std::invalid_argument("require kappa > 0");
  if (lambda_wall < 1.0)
    throw std::invalid_argument("wall amplification must be >= 1");
}

TrackingProblem::TrackingProblem(IpdgAssembler& assembler,
                                 const MeshParametrization& param,
                                 const SolverConfig& config)
    : assembler_(&assembler), param_(&param), config_(&config) {
  const MeshTopology& topo = assembler.topology();
  rho_ = Eigen::VectorXd::Ones(topo.nelems());
  if (config.lambda_wall != 1.0 && !config.wall_names.empty()) {
    const std::vector<char> wall = wall_elements(topo, config.wall_names);
    for (int e = 0; e < topo.nelems(); ++e)
      if (wall[e]) rho_(e) = config.lambda_wall;
  }
}

ObjectiveParts TrackingProblem::objective(const Eigen::VectorXd& u,
                                          const Eigen::VectorXd& y) const {
  const Eigen::VectorXd x = param_->apply(y);
  const Assembly a = assembler_->assemble(u, x, false, false);
  ObjectiveParts p;
  p.R_rho = apply_elemental_weight(assembler_->test(), rho_, a.R);
  p.r = a.r;
  p.R_msh = mesh_distortion_residual(assembler_->topology(), x);
  p.f_err = 0.5 * p.R_rho.squaredNorm();
  p.f_msh = 0.5 * p.R_msh.squaredNorm();
  p.f = p.f_err + config_->kappa * config_->kappa * p.f_msh;
  return p;
}

double regularization_gamma(double gamma_hat, double xi, double eta1, int k,
                            double eta2) {
  return gamma_hat / (std::pow(xi, eta1) * std::pow(double(k), eta2));
}

Eigen::VectorXd youngs_modulus_from_residual(const Space& test,
                                             const Eigen::VectorXd& R_rho,
                                             double C_l, double C_u) {
  const MeshTopology& topo = *test.topo;
  const int ne = topo.nelems();
  // log10 of the normalized elemental residual
  Eigen::VectorXd cK(ne);
  double rmax = 0.0;
  for (int e = 0; e < ne; ++e) {
    cK(e) = R_rho.segment(test.offset[e], test.elem_ndof(e)).norm();
    rmax = std::max(rmax, cK(e));
  }
  if (rmax <= 0.0) rmax = 1.0;
  for (int e = 0; e < ne; ++e)
    cK(e) = cK(e) > 0.0 ? std::log10(cK(e) / rmax) : -300.0;

  // L2 projection onto the continuous piecewise-linear vertex space
  std::vector<int> vid(topo.nnodes(), -1);
  int nv = 0;
  for (int e = 0; e < ne; ++e) {
    const ElementTopo& el = topo.elements[e];
    const ParentNodeSets& sets = parent_node_sets(el.kind, el.q);
    for (int v : sets.vertex_node)
      if (vid[el.nodes[v]] < 0) vid[el.nodes[v]] = nv++;
  }
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(nv);
  for (int e = 0; e < ne; ++e) {
    const ElementTopo& el = topo.elements[e];
    const ParentNodeSets& sets = parent_node_sets(el.kind, el.q);
    const NodalBasis& lin = basis_cache(el.kind, 1);
    const NodalBasis& mb = basis_cache(el.kind, el.q);
    const QuadratureRule rule = quadrature(el.kind, 2 + el.q);
    const Eigen::MatrixXd phi = lin.eval(rule.points);
    const std::vector<Eigen::MatrixXd> mpar = mb.grad(rule.points);
    const int d = topo.dim;
    for (int q = 0; q < rule.size(); ++q) {
      Eigen::MatrixXd jref = Eigen::MatrixXd::Zero(d, d);
      for (int a = 0; a < mb.size(); ++a)
        for (int i = 0; i < d; ++i)
          for (int l = 0; l < d; ++l)
            jref(i, l) += topo.ref_nodes(el.nodes[a], i) * mpar[l](q, a);
      const double w = rule.weights(q) * jref.determinant();
      for (int a = 0; a < lin.size(); ++a) {
        const int ga = vid[el.nodes[sets.vertex_node[a]]];
        b(ga) += w * phi(q, a) * cK(e);
        for (int bb = 0; bb < lin.size(); ++bb) {
          const int gb = vid[el.nodes[sets.vertex_node[bb]]];
          trips.emplace_back(ga, gb, w * phi(q, a) * phi(q, bb));
        }
      }
    }
  }
  Eigen::SparseMatrix<double> Mcg(nv, nv);
  Mcg.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(Mcg);
  const Eigen::VectorXd chat = ldlt.solve(b);

  const double cmax = chat.maxCoeff();
  const double smax = std::pow(10.0, cmax);
  // vertex values, then interpolate onto higher-order mapping nodes
  Eigen::VectorXd E = Eigen::VectorXd::Zero(topo.nnodes());
  Eigen::VectorXd done = Eigen::VectorXd::Zero(topo.nnodes());
  auto g_of_s = [&](double s) {
    const double th = 0.5 * (std::sin(M_PI * s / smax - M_PI / 2.0) + 1.0);
    return C_u * th + C_l * (1.0 - th);
  };
  for (int n = 0; n < topo.nnodes(); ++n)
    if (vid[n] >= 0) {
      E(n) = 1.0 / g_of_s(std::pow(10.0, chat(vid[n])));
      done(n) = 1.0;
    }
  for (int e = 0; e < ne; ++e) {
    const ElementTopo& el = topo.elements[e];
    if (el.q == 1) continue;
    const ParentNodeSets& sets = parent_node_sets(el.kind, el.q);
    const NodalBasis& lin = basis_cache(el.kind, 1);
    const Eigen::MatrixXd phi = lin.eval(nodal_points(el.kind, el.q));
    for (size_t a = 0; a < el.nodes.size(); ++a) {
      if (done(el.nodes[a]) > 0.0) continue;
      double v = 0.0;
      for (int b2 = 0; b2 < lin.size(); ++b2)
        v += E(el.nodes[sets.vertex_node[b2]]) * phi(static_cast<int>(a), b2);
      E(el.nodes[a]) = v;
      done(el.nodes[a]) = 1.0;
    }
  }
  return E;
}

namespace {

Eigen::VectorXd reference_volumes(const MeshTopology& topo) {
  Eigen::VectorXd vol(topo.nelems());
  for (int e = 0; e < topo.nelems(); ++e) {
    const ElementTopo& el = topo.elements[e];
    const NodalBasis& mb = basis_cache(el.kind, el.q);
    const QuadratureRule rule = quadrature(el.kind, 2 * el.q);
    const std::vector<Eigen::MatrixXd> mpar = mb.grad(rule.points);
    const int d = topo.dim;
    double acc = 0.0;
    for (int q = 0; q < rule.size(); ++q) {
      Eigen::MatrixXd jref = Eigen::MatrixXd::Zero(d, d);
      for (int a = 0; a < mb.size(); ++a)
        for (int i = 0; i < d; ++i)
          for (int l = 0; l < d; ++l)
            jref(i, l) += topo.ref_nodes(el.nodes[a], i) * mpar[l](q, a);
      acc += rule.weights(q) * jref.determinant();
    }
    vol(e) = acc;
  }
  return vol;
}

}  // namespace

Regularization regularization(const TrackingProblem& prob,
                              const Eigen::VectorXd& R_rho,
                              const Eigen::VectorXd& y, int k, double xi) {
  const SolverConfig& cfg = prob.config();
  const MeshTopology& topo = prob.assembler().topology();
  YoungsModulusField E;
  if (cfg.emode == YoungsModulusMode::InverseVolume) {
    E.elemental = reference_volumes(topo).cwiseInverse();
  } else {
    E.nodal = youngs_modulus_from_residual(prob.assembler().test(), R_rho,
                                           cfg.C_l, cfg.C_u);
  }
  const Eigen::SparseMatrix<double> K = assemble_elasticity_stiffness(topo, E);
  const Eigen::SparseMatrix<double> Phi = prob.parametrization().jacobian(y);
  Regularization reg;
  reg.D = Phi.transpose() * K * Phi;
  reg.gamma = cfg.gamma_hat > 0.0
                  ? regularization_gamma(cfg.gamma_hat, xi, cfg.eta1, k,
                                         cfg.eta2)
                  : 0.0;
  return reg;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> solve_kkt(
    const Eigen::SparseMatrix<double>& B, const Eigen::SparseMatrix<double>& J,
    const Eigen::VectorXd& g, const Eigen::VectorXd& r) {
  const int nz = static_cast<int>(B.rows());
  const int nc = static_cast<int>(J.rows());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(B.nonZeros() + 2 * J.nonZeros());
  for (int c = 0; c < B.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(B, c); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), c, it.value());
  for (int c = 0; c < J.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(J, c); it; ++it) {
      trips.emplace_back(nz + static_cast<int>(it.row()), c, it.value());
      trips.emplace_back(c, nz + static_cast<int>(it.row()), it.value());
    }
  Eigen::SparseMatrix<double> KKT(nz + nc, nz + nc);
  KKT.setFromTriplets(trips.begin(), trips.end());
  Eigen::VectorXd rhs(nz + nc);
  rhs.head(nz) = -g;
  rhs.tail(nc) = -r;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(KKT);
  if (lu.info() != Eigen::Success)
    throw std::runtime_error("KKT factorization failed (rank deficiency?)");
  const Eigen::VectorXd sol = lu.solve(rhs);
  if (!sol.allFinite())
    throw std::runtime_error("KKT solve produced non-finite step");
  return {sol.head(nz), sol.tail(nc)};
}

double iota_rule(double d, double theta_l, double theta_u) {
  if (d <= theta_l) return 1.0;
  if (d >= theta_u) return 0.0;
  return theta_l / d;
}

namespace {

template <class Model>
double step_constraint_impl(const Model& mdl, const Space& trial,
                            const Eigen::VectorXd& u, const Eigen::VectorXd& du,
                            const SolverConfig& cfg) {
  constexpr int M = Model::ncomp;
  constexpr int NP = Model::npositivity;
  if constexpr (NP == 0) {
    (void)mdl;
    (void)trial;
    (void)u;
    (void)du;
    (void)cfg;
    return 1.0;
  } else {
    const MeshTopology& topo = *trial.topo;
    double amin = 1.0;
    for (int e = 0; e < topo.nelems(); ++e) {
      const ElementTopo& el = topo.elements[e];
      const NodalBasis& fb = basis_cache(el.kind, trial.degree[e]);
      const QuadratureRule rule =
          quadrature(el.kind, 2 * trial.degree[e] + el.q);
      const Eigen::MatrixXd phi = fb.eval(rule.points);
      for (int q = 0; q < rule.size(); ++q) {
        Dual<M> W[M];
        double dW[M];
        for (int c = 0; c < M; ++c) {
          double wv = 0.0, dv = 0.0;
          for (int j = 0; j < fb.size(); ++j) {
            wv += u(trial.offset[e] + j * M + c) * phi(q, j);
            dv += du(trial.offset[e] + j * M + c) * phi(q, j);
          }
          W[c] = Dual<M>::seed(wv, c);
          dW[c] = dv;
        }
        Dual<M> pos[NP];
        mdl.positivity(W, pos);
        for (int p = 0; p < NP; ++p) {
          if (!(pos[p].val > 0.0)) return cfg.alpha_min;
          double dpos = 0.0;
          for (int c = 0; c < M; ++c) dpos += pos[p].der[c] * dW[c];
          const double d = std::abs(dpos) / pos[p].val;
          amin = std::min(amin, iota_rule(d, cfg.theta_l, cfg.theta_u));
        }
      }
    }
    return std::max(amin, cfg.alpha_min);
  }
}

}  // namespace

double step_length_constraint(const IpdgAssembler& assembler,
                              const Eigen::VectorXd& u,
                              const Eigen::VectorXd& x,
                              const Eigen::VectorXd& du,
                              const SolverConfig& config) {
  (void)x;
  return std::visit(
      [&](const auto& m) {
        return step_constraint_impl(m, assembler.trial(), u, du, config);
      },
      assembler.model());
}

namespace {

struct LineSearchOutcome {
  bool ok = false;
  bool nondescent = false;
  double alpha = 0.0;
  ObjectiveParts parts;
};

LineSearchOutcome merit_line_search(const TrackingProblem& prob,
                                    const Eigen::VectorXd& u,
                                    const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& du,
                                    const Eigen::VectorXd& dy,
                                    double alpha_hat, double f0,
                                    double r1norm0, double gdz, double mu) {
  const SolverConfig& cfg = prob.config();
  const double m0 = f0 + mu * r1norm0;
  const double d0 = gdz - mu * r1norm0;
  LineSearchOutcome out;
  if (d0 >= 0.0) {
    out.nondescent = true;
    return out;
  }
  double alpha = alpha_hat;
  while (alpha >= cfg.alpha_fail) {
    bool feasible = true;
    ObjectiveParts parts;
    try {
      parts = prob.objective(u + alpha * du, y + alpha * dy);
      if (!std::isfinite(parts.f) || !parts.r.allFinite()) feasible = false;
    } catch (const NonphysicalState&) {
      feasible = false;
    }
    if (feasible) {
      const double m = parts.f + mu * parts.r.lpNorm<1>();
      if (m <= m0 + cfg.armijo_c1 * alpha * d0) {
        out.ok = true;
        out.alpha = alpha;
        out.parts = std::move(parts);
        return out;
      }
    }
    alpha *= 0.5;
  }
  return out;
}

}  // namespace

HoistResult hoist_solve(TrackingProblem& prob, double xi, int j,
                        const Eigen::VectorXd& u0, const Eigen::VectorXd& y0,
                        int max_iters) {
  const SolverConfig& cfg = prob.config();
  cfg.validate();
  IpdgAssembler& assembler = prob.assembler();
  const MeshParametrization& param = prob.parametrization();
  const int iters = max_iters >= 0 ? max_iters : cfg.max_iters;

  HoistResult res;
  res.u = u0;
  res.y = y0;
  double mu_merit = 1.0;
  double boost = 1.0;

  for (int k = 1; k <= iters; ++k) {
    Eigen::VectorXd x;
    Assembly a;
    Eigen::SparseMatrix<double> dmsh_dx;
    Eigen::VectorXd R_msh;
    try {
      x = param.apply(res.y);
      a = assembler.assemble(res.u, x, true, true);
      R_msh = mesh_distortion_residual(assembler.topology(), x, &dmsh_dx);
    } catch (const std::exception& e) {
      res.failed = true;
      res.message = std::string("assembly failed at iterate: ") + e.what();
      return res;
    }

    const Eigen::VectorXd& rho = prob.weights();
    const Eigen::VectorXd R_rho =
        apply_elemental_weight(assembler.test(), rho, a.R);
    Eigen::SparseMatrix<double> dRr_du = a.dR_du, dRr_dx = a.dR_dx;
    {
      // scale test-block rows by rho
      const Space& test = assembler.test();
      Eigen::VectorXd rowscale(test.dim);
      for (int e = 0; e < assembler.topology().nelems(); ++e)
        rowscale.segment(test.offset[e], test.elem_ndof(e))
            .setConstant(rho(e));
      dRr_du = rowscale.asDiagonal() * dRr_du;
      dRr_dx = rowscale.asDiagonal() * dRr_dx;
    }

    const Eigen::SparseMatrix<double> Phi = param.jacobian(res.y);
    const double kap = cfg.kappa;
    const Eigen::SparseMatrix<double> dFy_err = dRr_dx * Phi;
    const Eigen::SparseMatrix<double> dFy_msh = (kap * dmsh_dx) * Phi;

    const double f_err = 0.5 * R_rho.squaredNorm();
    const double f_msh = 0.5 * R_msh.squaredNorm();
    const double f = f_err + kap * kap * f_msh;

    const int nu = static_cast<int>(res.u.size());
    const int ny = static_cast<int>(res.y.size());
    Eigen::VectorXd g(nu + ny);
    g.head(nu) = dRr_du.transpose() * R_rho;
    g.tail(ny) = dFy_err.transpose() * R_rho +
                 dFy_msh.transpose() * (kap * R_msh);

    const Regularization reg = regularization(prob, R_rho, res.y, k, xi);
    double gamma_eff = reg.gamma;
    if (boost > 1.0) gamma_eff = std::max(reg.gamma, 1e-8) * boost;

    // Gauss-Newton blocks
    Eigen::SparseMatrix<double> Buu =
        (dRr_du.transpose() * dRr_du).pruned();
    Eigen::SparseMatrix<double> Buy = (dRr_du.transpose() * dFy_err).pruned();
    Eigen::SparseMatrix<double> Byy =
        (dFy_err.transpose() * dFy_err + dFy_msh.transpose() * dFy_msh)
            .pruned();
    if (gamma_eff > 0.0) Byy += gamma_eff * reg.D;

    std::vector<Eigen::Triplet<double>> btr;
    auto append_block = [&](const Eigen::SparseMatrix<double>& Mtx, int r0,
                            int c0, bool also_transposed) {
      for (int c = 0; c < Mtx.outerSize(); ++c)
        for (Eigen::SparseMatrix<double>::InnerIterator it(Mtx, c); it; ++it) {
          btr.emplace_back(r0 + static_cast<int>(it.row()), c0 + c,
                           it.value());
          if (also_transposed)
            btr.emplace_back(c0 + c, r0 + static_cast<int>(it.row()),
                             it.value());
        }
    };
    append_block(Buu, 0, 0, false);
    append_block(Buy, 0, nu, true);
    append_block(Byy, nu, nu, false);
    Eigen::SparseMatrix<double> B(nu + ny, nu + ny);
    B.setFromTriplets(btr.begin(), btr.end());

    Eigen::SparseMatrix<double> Jc(nu, nu + ny);
    {
      std::vector<Eigen::Triplet<double>> jtr;
      for (int c = 0; c < a.dr_du.outerSize(); ++c)
        for (Eigen::SparseMatrix<double>::InnerIterator it(a.dr_du, c); it;
             ++it)
          jtr.emplace_back(static_cast<int>(it.row()), c, it.value());
      const Eigen::SparseMatrix<double> dr_dy = a.dr_dx * Phi;
      for (int c = 0; c < dr_dy.outerSize(); ++c)
        for (Eigen::SparseMatrix<double>::InnerIterator it(dr_dy, c); it; ++it)
          jtr.emplace_back(static_cast<int>(it.row()), nu + c, it.value());
      Jc.setFromTriplets(jtr.begin(), jtr.end());
    }

    Eigen::VectorXd dz, mult;
    try {
      std::tie(dz, mult) = solve_kkt(B, Jc, g, a.r);
    } catch (const std::exception& e) {
      res.failed = true;
      res.message = std::string("KKT solve failed: ") + e.what();
      return res;
    }

    IterRow row;
    row.k = k;
    row.xi = xi;
    row.j = j;
    row.f = f;
    row.f_err = f_err;
    row.f_msh = f_msh;
    row.norm_r = a.r.norm();
    row.norm_Rrho = R_rho.norm();
    row.gamma = gamma_eff;

    // first-order optimality
    const double opt = (g + Jc.transpose() * mult).lpNorm<Eigen::Infinity>();
    const double feas = a.r.lpNorm<Eigen::Infinity>();
    if (opt <= cfg.opt_tol && feas <= cfg.feas_tol) {
      res.history.push_back(row);
      res.converged = true;
      return res;
    }

    const Eigen::VectorXd du = dz.head(nu), dy = dz.tail(ny);
    double alpha_hat = 1.0;
    if (cfg.use_step_constraint)
      alpha_hat = step_length_constraint(assembler, res.u, x, du, cfg);
    row.alpha_hat = alpha_hat;

    mu_merit = std::max(2.0 * mult.lpNorm<Eigen::Infinity>(), 1.0);
    const double gdz = g.dot(dz);
    const LineSearchOutcome ls =
        merit_line_search(prob, res.u, res.y, du, dy, alpha_hat, f,
                          a.r.lpNorm<1>(), gdz, mu_merit);
    if (!ls.ok) {
      boost = std::min(boost * 10.0, 1e10);
      row.alpha = 0.0;
      res.history.push_back(row);
      continue;
    }
    // Levenberg-Marquardt flavored damping: short accepted steps raise the
    // mesh regularization, full steps relax it
    if (ls.alpha < 0.25 * alpha_hat)
      boost = std::min(boost * 4.0, 1e10);
    else if (ls.alpha == alpha_hat)
      boost = std::max(boost * 0.25, 1.0);
    row.alpha = ls.alpha;
    res.u += ls.alpha * du;
    res.y += ls.alpha * dy;

    // periodic flow-only correction on the frozen mesh
    if (cfg.omega_mod > 0 && k % cfg.omega_mod == 0) {
      const Eigen::VectorXd xm = param.apply(res.y);
      double rb;
      try {
        rb = assembler.assemble(res.u, xm, false, false).r.norm();
        PTCConfig pcfg;
        pcfg.max_steps = cfg.n_ptc;
        pcfg.tol = 0.0;
        pcfg.theta_l = cfg.theta_l;
        pcfg.theta_u = cfg.theta_u;
        const PTCResult pr = ptc_solve(assembler, res.u, xm, pcfg);
        const double ra = assembler.assemble(pr.u, xm, false, false).r.norm();
        if (ra < cfg.eps_mod * rb) {
          res.u = pr.u;
          row.modified = true;
        }
      } catch (const NonphysicalState&) {
        // leave the candidate unchanged
      }
    }

    // log post-step values
    {
      const ObjectiveParts p =
          row.modified ? prob.objective(res.u, res.y) : ls.parts;
      row.f = p.f;
      row.f_err = p.f_err;
      row.f_msh = p.f_msh;
      row.norm_r = p.r.norm();
      row.norm_Rrho = p.R_rho.norm();
    }
    res.history.push_back(row);
  }
  return res;
}

void write_history_csv(const std::string& path,
                       const std::vector<IterRow>& rows, bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!append)
    out << "k,xi,j,f,f_err,f_msh,norm_r,norm_Rrho,alpha,alpha_hat,gamma,"
           "modified\n";
  out.precision(16);
  for (const IterRow& r : rows)
    out << r.k << "," << r.xi << "," << r.j << "," << r.f << "," << r.f_err
        << "," << r.f_msh << "," << r.norm_r << "," << r.norm_Rrho << ","
        << r.alpha << "," << r.alpha_hat << "," << r.gamma << ","
        << (r.modified ? 1 : 0) << "\n";
}

}  // namespace hoist
