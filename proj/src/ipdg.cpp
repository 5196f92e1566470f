#include "hoist/ipdg.hpp"

#include <array>
#include <atomic>
#include <functional>
#include <thread>

#include "hoist/dual.hpp"
#include "hoist/quadrature.hpp"

namespace hoist {

namespace {

void parallel_for(int n, int nthreads, const std::function<void(int)>& body) {
  if (nthreads <= 1 || n < 4) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  const int nt = std::min(nthreads, n);
  for (int t = 0; t < nt; ++t)
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
    });
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Pointwise kernels. Input packs:
//   volume/boundary: [W(M), Qref(M*D), Theta(D*D), pos(D)]
//   interior face:   [Wp, Qp, Thp, Wm, Qm, Thm]

template <class Model>
struct KernelDims {
  static constexpr int M = Model::ncomp;
  static constexpr int D = Model::dim;
  static constexpr int VNIN = M + M * D + D * D + D;
  static constexpr int FNIN = 2 * (M + M * D + D * D);
};

template <class Model, class S>
void volume_kernel(const Model& mdl, const S* in, double av, S* volF,
                   S* src) {
  constexpr int M = Model::ncomp, D = Model::dim;
  const S* W = in;
  const S* Q = in + M;
  const S* Th = in + M + M * D;
  const S* pos = in + M + M * D + D * D;
  MappingAlgebra<S, D> map;
  map.compute(Th);
  S qphys[M * D];
  physical_gradient<S, M, D>(map, Q, qphys);
  S fi[M * D], fv[M * D];
  mdl.flux_inv(W, fi);
  mdl.flux_visc(W, qphys, av, fv);
  S fp[M * D];
  for (int i = 0; i < M * D; ++i) fp[i] = fi[i] - fv[i];
  transform_flux<S, M, D>(map, fp, volF);
  if (mdl.has_source) {
    S s[M];
    mdl.source(W, qphys, pos, s);
    for (int c = 0; c < M; ++c) src[c] = map.det * s[c];
  } else {
    for (int c = 0; c < M; ++c) src[c] = 0.0;
  }
}

// D_bar(W;Theta) : [(dw) x N] via the viscous flux (Remark: contractions of
// the transformed viscous tensor are viscous-flux evaluations).
template <class Model, class S>
void dbar_jump(const Model& mdl, const MappingAlgebra<S, Model::dim>& map,
               const S* W, const S* dw, const double* N, double av,
               bool zero_heat, S* out) {
  constexpr int M = Model::ncomp, D = Model::dim;
  S jt[M * D];
  for (int c = 0; c < M; ++c)
    for (int j = 0; j < D; ++j) jt[c * D + j] = dw[c] * N[j];
  S jphys[M * D];
  physical_gradient<S, M, D>(map, jt, jphys);
  S fv[M * D];
  if constexpr (Model::ncomp == 4) {
    mdl.flux_visc_bc(W, jphys, av, zero_heat, fv);
  } else {
    (void)zero_heat;
    mdl.flux_visc(W, jphys, av, fv);
  }
  transform_flux<S, M, D>(map, fv, out);
}

// Transformed Lax-Friedrichs flux through the co-normal of `map`.
template <class Model, class S>
void lf_inviscid(const Model& mdl, const MappingAlgebra<S, Model::dim>& map,
                 const S* Wp, const S* Wm, const double* N, S* fn) {
  constexpr int M = Model::ncomp, D = Model::dim;
  S ntil[D], nunit[D];
  const S nmag = conormal<S, D>(map, N, ntil, nunit);
  S fip[M * D], fim[M * D];
  mdl.flux_inv(Wp, fip);
  mdl.flux_inv(Wm, fim);
  const S lam = mdl.dissipation_speed(Wp, Wm, nunit) * nmag;
  for (int c = 0; c < M; ++c) {
    S acc = 0.0;
    for (int j = 0; j < D; ++j)
      acc += 0.5 * (fip[c * D + j] + fim[c * D + j]) * ntil[j];
    fn[c] = acc + 0.5 * lam * (Wp[c] - Wm[c]);
  }
}

template <class Model, class S>
void iface_kernel(const Model& mdl, const S* in, const double* N, double avp,
                  double avm, double pen, S* fn, S* symp, S* symm) {
  constexpr int M = Model::ncomp, D = Model::dim;
  constexpr int B = M + M * D + D * D;
  const S* Wp = in;
  const S* Qp = in + M;
  const S* Thp = in + M + M * D;
  const S* Wm = in + B;
  const S* Qm = in + B + M;
  const S* Thm = in + B + M + M * D;

  MappingAlgebra<S, D> mapp, mapm;
  mapp.compute(Thp);
  mapm.compute(Thm);
  lf_inviscid(mdl, mapp, Wp, Wm, N, fn);

  // viscous average {{D_bar grad w}} . N
  S qphys[M * D], fv[M * D], fvp_ref[M * D], fvm_ref[M * D];
  physical_gradient<S, M, D>(mapp, Qp, qphys);
  mdl.flux_visc(Wp, qphys, avp, fv);
  transform_flux<S, M, D>(mapp, fv, fvp_ref);
  physical_gradient<S, M, D>(mapm, Qm, qphys);
  mdl.flux_visc(Wm, qphys, avm, fv);
  transform_flux<S, M, D>(mapm, fv, fvm_ref);

  // penalty and symmetrization share D_bar contractions with the jump
  S dw[M];
  for (int c = 0; c < M; ++c) dw[c] = Wp[c] - Wm[c];
  S dbp[M * D], dbm[M * D];
  dbar_jump(mdl, mapp, Wp, dw, N, avp, false, dbp);
  dbar_jump(mdl, mapm, Wm, dw, N, avm, false, dbm);

  for (int c = 0; c < M; ++c) {
    S sn = 0.0;
    for (int j = 0; j < D; ++j) {
      const S sig = 0.5 * (fvp_ref[c * D + j] + fvm_ref[c * D + j]) -
                    pen * 0.5 * (dbp[c * D + j] + dbm[c * D + j]);
      sn += sig * N[j];
    }
    fn[c] -= sn;
  }
  for (int i = 0; i < M * D; ++i) {
    symp[i] = -0.5 * dbp[i];
    symm[i] = -0.5 * dbm[i];
  }
}

template <class Model, class S>
void bface_kernel(const Model& mdl, const BoundaryCondition& bc, const S* in,
                  const double* N, double av, double pen, S* fn, S* symp) {
  constexpr int M = Model::ncomp, D = Model::dim;
  const S* Wp = in;
  const S* Qp = in + M;
  const S* Thp = in + M + M * D;
  const S* pos = in + M + M * D + D * D;

  MappingAlgebra<S, D> map;
  map.compute(Thp);
  S ntil[D], nunit[D];
  conormal<S, D>(map, N, ntil, nunit);

  S Wm[M];
  mdl.ghost(bc, Wp, pos, nunit, Wm);
  lf_inviscid(mdl, map, Wp, Wm, N, fn);

  const ViscousBC pol = bc.viscous();
  if (pol == ViscousBC::None) {
    for (int i = 0; i < M * D; ++i) symp[i] = 0.0;
    return;
  }
  const bool zero_heat = pol == ViscousBC::Adiabatic;

  // one-sided interior traces for average and penalty
  S qphys[M * D], fv[M * D], fv_ref[M * D];
  physical_gradient<S, M, D>(map, Qp, qphys);
  if constexpr (Model::ncomp == 4)
    mdl.flux_visc_bc(Wp, qphys, av, zero_heat, fv);
  else
    mdl.flux_visc(Wp, qphys, av, fv);
  transform_flux<S, M, D>(map, fv, fv_ref);

  S dw[M];
  for (int c = 0; c < M; ++c) dw[c] = Wp[c] - Wm[c];
  S dbp[M * D];
  dbar_jump(mdl, map, Wp, dw, N, av, zero_heat, dbp);

  for (int c = 0; c < M; ++c) {
    S sn = 0.0;
    for (int j = 0; j < D; ++j)
      sn += (fv_ref[c * D + j] - pen * dbp[c * D + j]) * N[j];
    fn[c] -= sn;
  }
  for (int i = 0; i < M * D; ++i) symp[i] = -0.5 * dbp[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Assembler implementation

template <class Model>
class AsmImpl {
 public:
  static constexpr int M = Model::ncomp;
  static constexpr int D = Model::dim;
  static constexpr int VNIN = KernelDims<Model>::VNIN;
  static constexpr int FNIN = KernelDims<Model>::FNIN;

  AsmImpl(const Model* model, const MeshTopology& topo, const PDistribution& p,
          int delta, int Delta, double c_ip,
          std::vector<BoundaryCondition> bcs, int nthreads)
      : model_(model), topo_(&topo), p_(p), delta_(delta), Delta_(Delta),
        c_ip_(c_ip), bcs_(std::move(bcs)), nthreads_(nthreads) {
    if (Delta_ < delta_)
      throw std::invalid_argument("test enrichment below trial enrichment");
    trial_ = build_space(topo, p, delta_, M);
    test_ = build_space(topo, p, Delta_, M);
    coarse_ = build_space(topo, p, delta_, M);
    build_tables();
  }

  const Space& trial() const { return trial_; }
  const Space& test() const { return test_; }
  const MeshTopology& topology() const { return *topo_; }
  const Model& model() const { return *model_; }
  const PDistribution& degrees() const { return p_; }
  int delta() const { return delta_; }
  int Delta() const { return Delta_; }
  double c_ip() const { return c_ip_; }
  const std::vector<BoundaryCondition>& bcs() const { return bcs_; }

  Assembly assemble(const Eigen::VectorXd& u, const Eigen::VectorXd& x,
                    bool jac_u, bool jac_x, const Eigen::VectorXd& av) const;
  Eigen::VectorXd lift(const Eigen::VectorXd& u,
                       const Eigen::VectorXd& x) const;
  double qoi(const QoISpec& spec, const Eigen::VectorXd& u,
             const Eigen::VectorXd& x, Eigen::VectorXd* grad_u,
             std::vector<BoundarySample>* profile) const;

 private:
  struct ElemTab {
    int nq = 0;
    Eigen::VectorXd wdet;
    Eigen::MatrixXd trial_val, test_val, map_val;
    std::array<Eigen::MatrixXd, 2> trial_gref, test_gref, map_gref;
    double ref_vol = 0.0;
    Eigen::MatrixXd incl;  // scalar inclusion: coarse basis at test nodes
  };
  struct SideTab {
    Eigen::MatrixXd trial_val, test_val, map_val;
    std::array<Eigen::MatrixXd, 2> trial_gref, test_gref, map_gref;
  };
  struct FaceTab {
    int nq = 0;
    Eigen::VectorXd wds;
    Eigen::MatrixXd N;  // nq x D
    double pen_coef = 0.0;
    SideTab side[2];
  };

  void build_tables();
  void tabulate_at(int e, const Eigen::MatrixXd& pts, const NodalBasis& basis,
                   Eigen::MatrixXd& val,
                   std::array<Eigen::MatrixXd, 2>& gref) const;

  const Model* model_;
  const MeshTopology* topo_;
  PDistribution p_;
  int delta_, Delta_;
  double c_ip_;
  std::vector<BoundaryCondition> bcs_;
  int nthreads_;
  Space trial_, test_, coarse_;
  std::vector<ElemTab> etabs_;
  std::vector<FaceTab> ftabs_;
};

template <class Model>
void AsmImpl<Model>::tabulate_at(int e, const Eigen::MatrixXd& pts,
                                 const NodalBasis& basis, Eigen::MatrixXd& val,
                                 std::array<Eigen::MatrixXd, 2>& gref) const {
  const ElementTopo& el = topo_->elements[e];
  const NodalBasis& mb = basis_cache(el.kind, el.q);
  val = basis.eval(pts);
  const std::vector<Eigen::MatrixXd> gpar = basis.grad(pts);
  const std::vector<Eigen::MatrixXd> mpar = mb.grad(pts);
  const int nq = static_cast<int>(pts.rows());
  for (int l = 0; l < D; ++l) gref[l].resize(nq, basis.size());
  for (int q = 0; q < nq; ++q) {
    Eigen::Matrix<double, D, D> jref = Eigen::Matrix<double, D, D>::Zero();
    for (int a = 0; a < mb.size(); ++a)
      for (int i = 0; i < D; ++i)
        for (int l = 0; l < D; ++l)
          jref(i, l) += topo_->ref_nodes(el.nodes[a], i) * mpar[l](q, a);
    if (jref.determinant() <= 0.0)
      throw InvertedMapping("reference element has nonpositive Jacobian");
    const Eigen::Matrix<double, D, D> jinv_t = jref.inverse().transpose();
    for (int j = 0; j < basis.size(); ++j) {
      Eigen::Matrix<double, D, 1> g;
      for (int l = 0; l < D; ++l) g(l) = gpar[l](q, j);
      const Eigen::Matrix<double, D, 1> gr = jinv_t * g;
      for (int l = 0; l < D; ++l) gref[l](q, j) = gr(l);
    }
  }
}

template <class Model>
void AsmImpl<Model>::build_tables() {
  const MeshTopology& topo = *topo_;
  etabs_.resize(topo.nelems());
  for (int e = 0; e < topo.nelems(); ++e) {
    const ElementTopo& el = topo.elements[e];
    ElemTab& t = etabs_[e];
    const NodalBasis& tb = basis_cache(el.kind, trial_.degree[e]);
    const NodalBasis& sb = basis_cache(el.kind, test_.degree[e]);
    const NodalBasis& mb = basis_cache(el.kind, el.q);
    // covers test x flux(trial) products with a quadratic-flux margin
    const int rule_deg =
        std::max(2 * test_.degree[e],
                 test_.degree[e] + 2 * trial_.degree[e]) +
        el.q;
    const QuadratureRule rule = quadrature(el.kind, rule_deg);
    t.nq = rule.size();
    tabulate_at(e, rule.points, tb, t.trial_val, t.trial_gref);
    tabulate_at(e, rule.points, sb, t.test_val, t.test_gref);
    tabulate_at(e, rule.points, mb, t.map_val, t.map_gref);
    // reference volume weights
    t.wdet.resize(t.nq);
    const std::vector<Eigen::MatrixXd> mpar = mb.grad(rule.points);
    for (int q = 0; q < t.nq; ++q) {
      Eigen::Matrix<double, D, D> jref = Eigen::Matrix<double, D, D>::Zero();
      for (int a = 0; a < mb.size(); ++a)
        for (int i = 0; i < D; ++i)
          for (int l = 0; l < D; ++l)
            jref(i, l) += topo.ref_nodes(el.nodes[a], i) * mpar[l](q, a);
      t.wdet(q) = rule.weights(q) * jref.determinant();
    }
    t.ref_vol = t.wdet.sum();
    t.incl = basis_cache(el.kind, coarse_.degree[e]).eval(sb.nodes());
  }

  ftabs_.resize(topo.faces.size());
  for (size_t f = 0; f < topo.faces.size(); ++f) {
    const FaceTopo& ft = topo.faces[f];
    FaceTab& t = ftabs_[f];
    const int nsides = ft.elem[1] >= 0 ? 2 : 1;
    int fdeg = 0, pen_deg = 1;
    double min_vol = 1e300;
    for (int s = 0; s < nsides; ++s) {
      const int td = test_.degree[ft.elem[s]], rd = trial_.degree[ft.elem[s]];
      fdeg = std::max(fdeg, std::max(2 * td, td + 2 * rd) +
                                topo.elements[ft.elem[s]].q);
      pen_deg = std::max(pen_deg, trial_.degree[ft.elem[s]]);
      min_vol = std::min(min_vol, etabs_[ft.elem[s]].ref_vol);
    }

    Eigen::VectorXd sq, wq;
    if (D == 1) {
      sq = Eigen::VectorXd::Zero(1);
      wq = Eigen::VectorXd::Ones(1);
    } else {
      const QuadratureRule r1 = gauss_segment(fdeg / 2 + 1);
      sq = r1.points.col(0);
      wq = r1.weights;
    }
    t.nq = static_cast<int>(sq.size());

    // side parent points
    Eigen::MatrixXd spts[2];
    for (int s = 0; s < nsides; ++s) {
      const ElementTopo& el = topo.elements[ft.elem[s]];
      const ParentFace pf = parent_face(el.kind, ft.local_face[s]);
      spts[s].resize(t.nq, D);
      for (int q = 0; q < t.nq; ++q) {
        double sc = sq(q);
        if (s == 1 && ft.reversed) sc = 1.0 - sc;
        for (int i = 0; i < D; ++i)
          spts[s](q, i) = pf.origin(i) + sc * pf.tangent(i);
      }
    }

    for (int s = 0; s < nsides; ++s) {
      const int e = ft.elem[s];
      const ElementTopo& el = topo.elements[e];
      tabulate_at(e, spts[s], basis_cache(el.kind, trial_.degree[e]),
                  t.side[s].trial_val, t.side[s].trial_gref);
      tabulate_at(e, spts[s], basis_cache(el.kind, test_.degree[e]),
                  t.side[s].test_val, t.side[s].test_gref);
      tabulate_at(e, spts[s], basis_cache(el.kind, el.q), t.side[s].map_val,
                  t.side[s].map_gref);
    }

    // reference normal and surface Jacobian from side 0
    t.N.resize(t.nq, D);
    t.wds.resize(t.nq);
    const ElementTopo& el0 = topo.elements[ft.elem[0]];
    const ParentFace pf0 = parent_face(el0.kind, ft.local_face[0]);
    const NodalBasis& mb0 = basis_cache(el0.kind, el0.q);
    const std::vector<Eigen::MatrixXd> mpar0 = mb0.grad(spts[0]);
    double face_meas = 0.0;
    for (int q = 0; q < t.nq; ++q) {
      if (D == 1) {
        t.N(q, 0) = pf0.normal(0);
        t.wds(q) = 1.0;
        face_meas = 1.0;
      } else {
        Eigen::Matrix2d jref = Eigen::Matrix2d::Zero();
        for (int a = 0; a < mb0.size(); ++a)
          for (int i = 0; i < 2; ++i)
            for (int l = 0; l < 2; ++l)
              jref(i, l) += topo.ref_nodes(el0.nodes[a], i) * mpar0[l](q, a);
        const Eigen::Vector2d tpar(pf0.tangent(0), pf0.tangent(1));
        const Eigen::Vector2d tan = jref * tpar;
        const double sj = tan.norm();
        t.N(q, 0) = tan(1) / sj;
        t.N(q, 1) = -tan(0) / sj;
        t.wds(q) = wq(q) * sj;
        face_meas += t.wds(q);
      }
    }
    const double h = min_vol / face_meas;
    t.pen_coef = c_ip_ * pen_deg / h;
  }
}

namespace {

// Local dense output of one assembly work item.
struct LocalBlock {
  // residual per test side (enriched space)
  Eigen::VectorXd res[2];
  // jacobian blocks: [test side][u side], [test side][x side]
  Eigen::MatrixXd du[2][2];
  Eigen::MatrixXd dx[2][2];
  int nsides = 1;
};

}  // namespace

template <class Model>
Assembly AsmImpl<Model>::assemble(const Eigen::VectorXd& u,
                                  const Eigen::VectorXd& x, bool jac_u,
                                  bool jac_x,
                                  const Eigen::VectorXd& av_in) const {
  const MeshTopology& topo = *topo_;
  if (u.size() != trial_.dim)
    throw std::invalid_argument("assemble: flow coefficient size mismatch");
  if (x.size() != topo.nx())
    throw std::invalid_argument("assemble: coordinate size mismatch");
  Eigen::VectorXd av = av_in;
  if (av.size() == 0) av = Eigen::VectorXd::Zero(topo.nelems());

  const int ne = topo.nelems();
  const int nf = static_cast<int>(topo.faces.size());
  std::vector<LocalBlock> eout(ne), fout(nf);
  const Model& mdl = *model_;

  // ---- volume terms ----
  parallel_for(ne, nthreads_, [&](int e) {
    const ElemTab& t = etabs_[e];
    const ElementTopo& el = topo.elements[e];
    const int ntr = static_cast<int>(t.trial_val.cols());
    const int nts = static_cast<int>(t.test_val.cols());
    const int nmp = static_cast<int>(t.map_val.cols());
    LocalBlock& out = eout[e];
    out.nsides = 1;
    out.res[0] = Eigen::VectorXd::Zero(nts * M);
    if (jac_u) out.du[0][0] = Eigen::MatrixXd::Zero(nts * M, ntr * M);
    if (jac_x) out.dx[0][0] = Eigen::MatrixXd::Zero(nts * M, nmp * D);

    const bool any_jac = jac_u || jac_x;
    for (int q = 0; q < t.nq; ++q) {
      // gather kernel inputs
      double in[VNIN];
      for (int c = 0; c < M; ++c) {
        double wv = 0.0;
        for (int j = 0; j < ntr; ++j)
          wv += u(trial_.offset[e] + j * M + c) * t.trial_val(q, j);
        in[c] = wv;
        for (int l = 0; l < D; ++l) {
          double g = 0.0;
          for (int j = 0; j < ntr; ++j)
            g += u(trial_.offset[e] + j * M + c) * t.trial_gref[l](q, j);
          in[M + c * D + l] = g;
        }
      }
      for (int i = 0; i < D; ++i) {
        for (int l = 0; l < D; ++l) {
          double th = 0.0;
          for (int a = 0; a < nmp; ++a)
            th += x(el.nodes[a] * D + i) * t.map_gref[l](q, a);
          in[M + M * D + i * D + l] = th;
        }
        double ps = 0.0;
        for (int a = 0; a < nmp; ++a)
          ps += x(el.nodes[a] * D + i) * t.map_val(q, a);
        in[M + M * D + D * D + i] = ps;
      }
      const double w = t.wdet(q);

      if (!any_jac) {
        double volF[M * D], src[M];
        volume_kernel(mdl, in, av(e), volF, src);
        for (int i = 0; i < nts; ++i)
          for (int c = 0; c < M; ++c) {
            double acc = -t.test_val(q, i) * src[c];
            for (int l = 0; l < D; ++l)
              acc -= t.test_gref[l](q, i) * volF[c * D + l];
            out.res[0](i * M + c) += w * acc;
          }
      } else {
        using SD = Dual<VNIN>;
        SD din[VNIN];
        for (int s = 0; s < VNIN; ++s) din[s] = SD::seed(in[s], s);
        SD volF[M * D], src[M];
        volume_kernel(mdl, din, av(e), volF, src);
        // residual
        for (int i = 0; i < nts; ++i)
          for (int c = 0; c < M; ++c) {
            double acc = -t.test_val(q, i) * src[c].val;
            for (int l = 0; l < D; ++l)
              acc -= t.test_gref[l](q, i) * volF[c * D + l].val;
            out.res[0](i * M + c) += w * acc;
          }
        // d(out)/d(slot) -> d/d(dof)
        if (jac_u) {
          for (int j = 0; j < ntr; ++j)
            for (int cc = 0; cc < M; ++cc) {
              // derivative of each kernel output w.r.t. u dof (j,cc)
              double dvolF[M * D], dsrc[M];
              for (int o = 0; o < M * D; ++o) {
                double dd = volF[o].der[cc] * t.trial_val(q, j);
                for (int l = 0; l < D; ++l)
                  dd += volF[o].der[M + cc * D + l] * t.trial_gref[l](q, j);
                dvolF[o] = dd;
              }
              for (int c = 0; c < M; ++c) {
                double dd = src[c].der[cc] * t.trial_val(q, j);
                for (int l = 0; l < D; ++l)
                  dd += src[c].der[M + cc * D + l] * t.trial_gref[l](q, j);
                dsrc[c] = dd;
              }
              for (int i = 0; i < nts; ++i)
                for (int c = 0; c < M; ++c) {
                  double acc = -t.test_val(q, i) * dsrc[c];
                  for (int l = 0; l < D; ++l)
                    acc -= t.test_gref[l](q, i) * dvolF[c * D + l];
                  out.du[0][0](i * M + c, j * M + cc) += w * acc;
                }
            }
        }
        if (jac_x) {
          for (int a = 0; a < nmp; ++a)
            for (int ii = 0; ii < D; ++ii) {
              double dvolF[M * D], dsrc[M];
              for (int o = 0; o < M * D; ++o) {
                double dd = volF[o].der[M + M * D + D * D + ii] * t.map_val(q, a);
                for (int l = 0; l < D; ++l)
                  dd += volF[o].der[M + M * D + ii * D + l] * t.map_gref[l](q, a);
                dvolF[o] = dd;
              }
              for (int c = 0; c < M; ++c) {
                double dd = src[c].der[M + M * D + D * D + ii] * t.map_val(q, a);
                for (int l = 0; l < D; ++l)
                  dd += src[c].der[M + M * D + ii * D + l] * t.map_gref[l](q, a);
                dsrc[c] = dd;
              }
              for (int i = 0; i < nts; ++i)
                for (int c = 0; c < M; ++c) {
                  double acc = -t.test_val(q, i) * dsrc[c];
                  for (int l = 0; l < D; ++l)
                    acc -= t.test_gref[l](q, i) * dvolF[c * D + l];
                  out.dx[0][0](i * M + c, a * D + ii) += w * acc;
                }
            }
        }
      }
    }
  });

  // ---- face terms ----
  parallel_for(nf, nthreads_, [&](int f) {
    const FaceTopo& ft = topo.faces[f];
    const FaceTab& t = ftabs_[f];
    const int nsides = ft.elem[1] >= 0 ? 2 : 1;
    LocalBlock& out = fout[f];
    out.nsides = nsides;
    int ntr[2] = {0, 0}, nts[2] = {0, 0}, nmp[2] = {0, 0};
    for (int s = 0; s < nsides; ++s) {
      ntr[s] = static_cast<int>(t.side[s].trial_val.cols());
      nts[s] = static_cast<int>(t.side[s].test_val.cols());
      nmp[s] = static_cast<int>(t.side[s].map_val.cols());
      out.res[s] = Eigen::VectorXd::Zero(nts[s] * M);
    }
    for (int s = 0; s < nsides; ++s)
      for (int s2 = 0; s2 < nsides; ++s2) {
        if (jac_u) out.du[s][s2] = Eigen::MatrixXd::Zero(nts[s] * M, ntr[s2] * M);
        if (jac_x) out.dx[s][s2] = Eigen::MatrixXd::Zero(nts[s] * M, nmp[s2] * D);
      }
    const bool any_jac = jac_u || jac_x;
    constexpr int B = M + M * D + D * D;

    for (int q = 0; q < t.nq; ++q) {
      double N[D];
      for (int i = 0; i < D; ++i) N[i] = t.N(q, i);
      const double w = t.wds(q);

      // gather inputs for available sides
      double in[FNIN];
      for (int s = 0; s < nsides; ++s) {
        const int e = ft.elem[s];
        const SideTab& st = t.side[s];
        for (int c = 0; c < M; ++c) {
          double wv = 0.0;
          for (int j = 0; j < ntr[s]; ++j)
            wv += u(trial_.offset[e] + j * M + c) * st.trial_val(q, j);
          in[s * B + c] = wv;
          for (int l = 0; l < D; ++l) {
            double g = 0.0;
            for (int j = 0; j < ntr[s]; ++j)
              g += u(trial_.offset[e] + j * M + c) * st.trial_gref[l](q, j);
            in[s * B + M + c * D + l] = g;
          }
        }
        const ElementTopo& el = topo.elements[e];
        for (int i = 0; i < D; ++i)
          for (int l = 0; l < D; ++l) {
            double th = 0.0;
            for (int a = 0; a < nmp[s]; ++a)
              th += x(el.nodes[a] * D + i) * st.map_gref[l](q, a);
            in[s * B + M + M * D + i * D + l] = th;
          }
      }

      if (nsides == 2) {
        const double avp = av(ft.elem[0]), avm = av(ft.elem[1]);
        auto chain = [&](auto& fn, auto& symp, auto& symm, auto get_der) {
          // residual contributions
          for (int s = 0; s < 2; ++s) {
            const SideTab& st = t.side[s];
            const double sgn = s == 0 ? 1.0 : -1.0;
            auto& sym = s == 0 ? symp : symm;
            for (int i = 0; i < nts[s]; ++i)
              for (int c = 0; c < M; ++c) {
                double acc = sgn * st.test_val(q, i) * value(fn[c]);
                for (int l = 0; l < D; ++l)
                  acc += st.test_gref[l](q, i) * value(sym[c * D + l]);
                out.res[s](i * M + c) += w * acc;
              }
          }
          (void)get_der;
        };
        if (!any_jac) {
          double fn[M], symp[M * D], symm[M * D];
          iface_kernel(mdl, in, N, avp, avm, t.pen_coef, fn, symp, symm);
          chain(fn, symp, symm, 0);
        } else {
          using SD = Dual<FNIN>;
          SD din[FNIN];
          for (int s = 0; s < FNIN; ++s) din[s] = SD::seed(in[s], s);
          SD fn[M], symp[M * D], symm[M * D];
          iface_kernel(mdl, din, N, avp, avm, t.pen_coef, fn, symp, symm);
          chain(fn, symp, symm, 0);
          // derivative slots per trial side
          for (int s2 = 0; s2 < 2; ++s2) {
            const SideTab& st2 = t.side[s2];
            if (jac_u) {
              for (int j = 0; j < ntr[s2]; ++j)
                for (int cc = 0; cc < M; ++cc) {
                  double dfn[M], dsp[M * D], dsm[M * D];
                  auto dof_der = [&](const SD& v) {
                    double dd = v.der[s2 * B + cc] * st2.trial_val(q, j);
                    for (int l = 0; l < D; ++l)
                      dd += v.der[s2 * B + M + cc * D + l] *
                            st2.trial_gref[l](q, j);
                    return dd;
                  };
                  for (int c = 0; c < M; ++c) dfn[c] = dof_der(fn[c]);
                  for (int o = 0; o < M * D; ++o) {
                    dsp[o] = dof_der(symp[o]);
                    dsm[o] = dof_der(symm[o]);
                  }
                  for (int s = 0; s < 2; ++s) {
                    const SideTab& st = t.side[s];
                    const double sgn = s == 0 ? 1.0 : -1.0;
                    const double* dsym = s == 0 ? dsp : dsm;
                    for (int i = 0; i < nts[s]; ++i)
                      for (int c = 0; c < M; ++c) {
                        double acc = sgn * st.test_val(q, i) * dfn[c];
                        for (int l = 0; l < D; ++l)
                          acc += st.test_gref[l](q, i) * dsym[c * D + l];
                        out.du[s][s2](i * M + c, j * M + cc) += w * acc;
                      }
                  }
                }
            }
            if (jac_x) {
              for (int a = 0; a < nmp[s2]; ++a)
                for (int ii = 0; ii < D; ++ii) {
                  double dfn[M], dsp[M * D], dsm[M * D];
                  auto dof_der = [&](const SD& v) {
                    double dd = 0.0;
                    for (int l = 0; l < D; ++l)
                      dd += v.der[s2 * B + M + M * D + ii * D + l] *
                            st2.map_gref[l](q, a);
                    return dd;
                  };
                  for (int c = 0; c < M; ++c) dfn[c] = dof_der(fn[c]);
                  for (int o = 0; o < M * D; ++o) {
                    dsp[o] = dof_der(symp[o]);
                    dsm[o] = dof_der(symm[o]);
                  }
                  for (int s = 0; s < 2; ++s) {
                    const SideTab& st = t.side[s];
                    const double sgn = s == 0 ? 1.0 : -1.0;
                    const double* dsym = s == 0 ? dsp : dsm;
                    for (int i = 0; i < nts[s]; ++i)
                      for (int c = 0; c < M; ++c) {
                        double acc = sgn * st.test_val(q, i) * dfn[c];
                        for (int l = 0; l < D; ++l)
                          acc += st.test_gref[l](q, i) * dsym[c * D + l];
                        out.dx[s][s2](i * M + c, a * D + ii) += w * acc;
                      }
                  }
                }
            }
          }
        }
      } else {
        // boundary face: inputs [W, Q, Th, pos]
        const BoundaryCondition& bc = bcs_.at(ft.btag);
        const int e = ft.elem[0];
        const ElementTopo& el = topo.elements[e];
        const SideTab& st = t.side[0];
        double bin[VNIN];
        for (int c = 0; c < M; ++c) bin[c] = in[c];
        for (int c = 0; c < M; ++c)
          for (int l = 0; l < D; ++l) bin[M + c * D + l] = in[M + c * D + l];
        for (int i = 0; i < D * D; ++i) bin[M + M * D + i] = in[M + M * D + i];
        for (int i = 0; i < D; ++i) {
          double ps = 0.0;
          for (int a = 0; a < nmp[0]; ++a)
            ps += x(el.nodes[a] * D + i) * st.map_val(q, a);
          bin[M + M * D + D * D + i] = ps;
        }
        if (!any_jac) {
          double fn[M], symp[M * D];
          bface_kernel(mdl, bc, bin, N, av(e), t.pen_coef, fn, symp);
          for (int i = 0; i < nts[0]; ++i)
            for (int c = 0; c < M; ++c) {
              double acc = st.test_val(q, i) * fn[c];
              for (int l = 0; l < D; ++l)
                acc += st.test_gref[l](q, i) * symp[c * D + l];
              out.res[0](i * M + c) += w * acc;
            }
        } else {
          using SD = Dual<VNIN>;
          SD din[VNIN];
          for (int s = 0; s < VNIN; ++s) din[s] = SD::seed(bin[s], s);
          SD fn[M], symp[M * D];
          bface_kernel(mdl, bc, din, N, av(e), t.pen_coef, fn, symp);
          for (int i = 0; i < nts[0]; ++i)
            for (int c = 0; c < M; ++c) {
              double acc = st.test_val(q, i) * fn[c].val;
              for (int l = 0; l < D; ++l)
                acc += st.test_gref[l](q, i) * symp[c * D + l].val;
              out.res[0](i * M + c) += w * acc;
            }
          if (jac_u) {
            for (int j = 0; j < ntr[0]; ++j)
              for (int cc = 0; cc < M; ++cc) {
                double dfn[M], dsp[M * D];
                auto dof_der = [&](const SD& v) {
                  double dd = v.der[cc] * st.trial_val(q, j);
                  for (int l = 0; l < D; ++l)
                    dd += v.der[M + cc * D + l] * st.trial_gref[l](q, j);
                  return dd;
                };
                for (int c = 0; c < M; ++c) dfn[c] = dof_der(fn[c]);
                for (int o = 0; o < M * D; ++o) dsp[o] = dof_der(symp[o]);
                for (int i = 0; i < nts[0]; ++i)
                  for (int c = 0; c < M; ++c) {
                    double acc = st.test_val(q, i) * dfn[c];
                    for (int l = 0; l < D; ++l)
                      acc += st.test_gref[l](q, i) * dsp[c * D + l];
                    out.du[0][0](i * M + c, j * M + cc) += w * acc;
                  }
              }
          }
          if (jac_x) {
            for (int a = 0; a < nmp[0]; ++a)
              for (int ii = 0; ii < D; ++ii) {
                double dfn[M], dsp[M * D];
                auto dof_der = [&](const SD& v) {
                  double dd =
                      v.der[M + M * D + D * D + ii] * st.map_val(q, a);
                  for (int l = 0; l < D; ++l)
                    dd += v.der[M + M * D + ii * D + l] * st.map_gref[l](q, a);
                  return dd;
                };
                for (int c = 0; c < M; ++c) dfn[c] = dof_der(fn[c]);
                for (int o = 0; o < M * D; ++o) dsp[o] = dof_der(symp[o]);
                for (int i = 0; i < nts[0]; ++i)
                  for (int c = 0; c < M; ++c) {
                    double acc = st.test_val(q, i) * dfn[c];
                    for (int l = 0; l < D; ++l)
                      acc += st.test_gref[l](q, i) * dsp[c * D + l];
                    out.dx[0][0](i * M + c, a * D + ii) += w * acc;
                  }
              }
          }
        }
      }
    }
  });

  // ---- deterministic scatter ----
  Assembly out;
  out.R = Eigen::VectorXd::Zero(test_.dim);
  out.r = Eigen::VectorXd::Zero(coarse_.dim);
  std::vector<Eigen::Triplet<double>> tRu, tRx, tru, trx;

  auto scatter = [&](const LocalBlock& lb, const int elems[2],
                     int nsides) {
    for (int s = 0; s < nsides; ++s) {
      const int e = elems[s];
      const int off_t = test_.offset[e];
      const int off_c = coarse_.offset[e];
      const Eigen::MatrixXd& C = etabs_[e].incl;  // ntest x ncoarse (scalar)
      const int ncs = static_cast<int>(C.cols());
      const int nes = static_cast<int>(C.rows());
      // enriched residual
      for (int k = 0; k < nes * M; ++k) out.R(off_t + k) += lb.res[s](k);
      // restricted residual
      for (int i = 0; i < ncs; ++i)
        for (int c = 0; c < M; ++c) {
          double acc = 0.0;
          for (int k = 0; k < nes; ++k) acc += C(k, i) * lb.res[s](k * M + c);
          out.r(off_c + i * M + c) += acc;
        }
      for (int s2 = 0; s2 < nsides; ++s2) {
        const int e2 = elems[s2];
        if (jac_u && lb.du[s][s2].size() > 0) {
          const Eigen::MatrixXd& Bm = lb.du[s][s2];
          const int off_u = trial_.offset[e2];
          for (int rloc = 0; rloc < Bm.rows(); ++rloc)
            for (int cloc = 0; cloc < Bm.cols(); ++cloc)
              if (Bm(rloc, cloc) != 0.0)
                tRu.emplace_back(off_t + rloc, off_u + cloc, Bm(rloc, cloc));
          // restricted rows
          for (int i = 0; i < ncs; ++i)
            for (int c = 0; c < M; ++c)
              for (int cloc = 0; cloc < Bm.cols(); ++cloc) {
                double acc = 0.0;
                for (int k = 0; k < nes; ++k)
                  acc += C(k, i) * Bm(k * M + c, cloc);
                if (acc != 0.0)
                  tru.emplace_back(off_c + i * M + c, off_u + cloc, acc);
              }
        }
        if (jac_x && lb.dx[s][s2].size() > 0) {
          const Eigen::MatrixXd& Bm = lb.dx[s][s2];
          const std::vector<int>& nodes = topo.elements[e2].nodes;
          for (int rloc = 0; rloc < Bm.rows(); ++rloc)
            for (int a = 0; a < static_cast<int>(nodes.size()); ++a)
              for (int ii = 0; ii < D; ++ii) {
                const double v = Bm(rloc, a * D + ii);
                if (v != 0.0)
                  tRx.emplace_back(off_t + rloc, nodes[a] * D + ii, v);
              }
          for (int i = 0; i < ncs; ++i)
            for (int c = 0; c < M; ++c)
              for (int a = 0; a < static_cast<int>(nodes.size()); ++a)
                for (int ii = 0; ii < D; ++ii) {
                  double acc = 0.0;
                  for (int k = 0; k < nes; ++k)
                    acc += C(k, i) * Bm(k * M + c, a * D + ii);
                  if (acc != 0.0)
                    trx.emplace_back(off_c + i * M + c, nodes[a] * D + ii,
                                     acc);
                }
        }
      }
    }
  };

  for (int e = 0; e < ne; ++e) {
    const int elems[2] = {e, -1};
    scatter(eout[e], elems, 1);
  }
  for (int f = 0; f < nf; ++f) {
    scatter(fout[f], topo.faces[f].elem, fout[f].nsides);
  }

  if (jac_u) {
    out.dR_du.resize(test_.dim, trial_.dim);
    out.dR_du.setFromTriplets(tRu.begin(), tRu.end());
    out.dr_du.resize(coarse_.dim, trial_.dim);
    out.dr_du.setFromTriplets(tru.begin(), tru.end());
  }
  if (jac_x) {
    out.dR_dx.resize(test_.dim, topo.nx());
    out.dR_dx.setFromTriplets(tRx.begin(), tRx.end());
    out.dr_dx.resize(coarse_.dim, topo.nx());
    out.dr_dx.setFromTriplets(trx.begin(), trx.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lifted viscous flux (per-element mass solves with face jump lifting).

template <class Model>
Eigen::VectorXd AsmImpl<Model>::lift(const Eigen::VectorXd& u,
                                     const Eigen::VectorXd& x) const {
  const MeshTopology& topo = *topo_;
  Eigen::VectorXd sigma = Eigen::VectorXd::Zero(trial_.dim * D);
  const Model& mdl = *model_;

  // volume part: int tau : D_bar grad u dV (reference measure)
  std::vector<Eigen::MatrixXd> rhs(topo.nelems());
  std::vector<Eigen::MatrixXd> mass(topo.nelems());
  for (int e = 0; e < topo.nelems(); ++e) {
    const ElemTab& t = etabs_[e];
    const ElementTopo& el = topo.elements[e];
    const int ntr = static_cast<int>(t.trial_val.cols());
    rhs[e] = Eigen::MatrixXd::Zero(ntr, M * D);
    mass[e] = Eigen::MatrixXd::Zero(ntr, ntr);
    for (int q = 0; q < t.nq; ++q) {
      double in[VNIN];
      for (int c = 0; c < M; ++c) {
        double wv = 0.0, g;
        for (int j = 0; j < ntr; ++j)
          wv += u(trial_.offset[e] + j * M + c) * t.trial_val(q, j);
        in[c] = wv;
        for (int l = 0; l < D; ++l) {
          g = 0.0;
          for (int j = 0; j < ntr; ++j)
            g += u(trial_.offset[e] + j * M + c) * t.trial_gref[l](q, j);
          in[M + c * D + l] = g;
        }
      }
      for (int i = 0; i < D; ++i)
        for (int l = 0; l < D; ++l) {
          double th = 0.0;
          for (int a = 0; a < static_cast<int>(t.map_val.cols()); ++a)
            th += x(el.nodes[a] * D + i) * t.map_gref[l](q, a);
          in[M + M * D + i * D + l] = th;
        }
      MappingAlgebra<double, D> map;
      map.compute(in + M + M * D);
      double qphys[M * D], fv[M * D], fref[M * D];
      physical_gradient<double, M, D>(map, in + M, qphys);
      mdl.flux_visc(in, qphys, 0.0, fv);
      transform_flux<double, M, D>(map, fv, fref);
      const double w = t.wdet(q);
      for (int j = 0; j < ntr; ++j) {
        for (int o = 0; o < M * D; ++o)
          rhs[e](j, o) += w * t.trial_val(q, j) * fref[o];
        for (int j2 = 0; j2 < ntr; ++j2)
          mass[e](j, j2) += w * t.trial_val(q, j) * t.trial_val(q, j2);
      }
    }
  }

  // face lifting: -int tau^+ D_bar(W^+):[(dW) x N] dS on each side
  for (size_t f = 0; f < topo.faces.size(); ++f) {
    const FaceTopo& ft = topo.faces[f];
    const FaceTab& t = ftabs_[f];
    const int nsides = ft.elem[1] >= 0 ? 2 : 1;
    for (int q = 0; q < t.nq; ++q) {
      double N[D];
      for (int i = 0; i < D; ++i) N[i] = t.N(q, i);
      double W[2][M];
      double Th[2][D * D];
      for (int s = 0; s < nsides; ++s) {
        const int e = ft.elem[s];
        const SideTab& st = t.side[s];
        const int ntr = static_cast<int>(st.trial_val.cols());
        for (int c = 0; c < M; ++c) {
          double wv = 0.0;
          for (int j = 0; j < ntr; ++j)
            wv += u(trial_.offset[e] + j * M + c) * st.trial_val(q, j);
          W[s][c] = wv;
        }
        const ElementTopo& el = topo.elements[e];
        for (int i = 0; i < D; ++i)
          for (int l = 0; l < D; ++l) {
            double th = 0.0;
            for (int a = 0; a < static_cast<int>(st.map_val.cols()); ++a)
              th += x(el.nodes[a] * D + i) * st.map_gref[l](q, a);
            Th[s][i * D + l] = th;
          }
      }
      bool zero_heat = false;
      if (nsides == 1) {
        const BoundaryCondition& bc = bcs_.at(ft.btag);
        if (bc.viscous() == ViscousBC::None) continue;
        zero_heat = bc.viscous() == ViscousBC::Adiabatic;
        // ghost state
        MappingAlgebra<double, D> map;
        map.compute(Th[0]);
        double ntil[D], nunit[D];
        conormal<double, D>(map, N, ntil, nunit);
        double pos[D];
        const SideTab& st = t.side[0];
        const ElementTopo& el = topo.elements[ft.elem[0]];
        for (int i = 0; i < D; ++i) {
          pos[i] = 0.0;
          for (int a = 0; a < static_cast<int>(st.map_val.cols()); ++a)
            pos[i] += x(el.nodes[a] * D + i) * st.map_val(q, a);
        }
        mdl.ghost(bc, W[0], pos, nunit, W[1]);
      }
      double dw[M];
      for (int c = 0; c < M; ++c) dw[c] = W[0][c] - W[1][c];
      for (int s = 0; s < nsides; ++s) {
        MappingAlgebra<double, D> map;
        map.compute(Th[s]);
        double db[M * D];
        dbar_jump(mdl, map, W[s], dw, N, 0.0, zero_heat, db);
        const SideTab& st = t.side[s];
        const int e = ft.elem[s];
        const int ntr = static_cast<int>(st.trial_val.cols());
        const double w = t.wds(q);
        for (int j = 0; j < ntr; ++j)
          for (int o = 0; o < M * D; ++o)
            rhs[e](j, o) -= w * st.trial_val(q, j) * db[o];
      }
    }
  }

  for (int e = 0; e < topo.nelems(); ++e) {
    const Eigen::MatrixXd sol = mass[e].ldlt().solve(rhs[e]);
    const int ntr = static_cast<int>(sol.rows());
    for (int j = 0; j < ntr; ++j)
      for (int c = 0; c < M; ++c)
        for (int l = 0; l < D; ++l)
          sigma((trial_.offset[e] + j * M + c) * D + l) = sol(j, c * D + l);
  }
  return sigma;
}

// ---------------------------------------------------------------------------
// Quantities of interest

template <class Model>
double AsmImpl<Model>::qoi(const QoISpec& spec, const Eigen::VectorXd& u,
                           const Eigen::VectorXd& x, Eigen::VectorXd* grad_u,
                           std::vector<BoundarySample>* profile) const {
  const MeshTopology& topo = *topo_;
  const Model& mdl = *model_;
  double total = 0.0;
  if (grad_u) *grad_u = Eigen::VectorXd::Zero(trial_.dim);

  if (spec.kind == QoISpec::Kind::VolumeStateIntegral) {
    for (int e = 0; e < topo.nelems(); ++e) {
      const ElemTab& t = etabs_[e];
      const ElementTopo& el = topo.elements[e];
      const int ntr = static_cast<int>(t.trial_val.cols());
      for (int q = 0; q < t.nq; ++q) {
        Eigen::VectorXd pos = Eigen::VectorXd::Zero(D);
        Eigen::Matrix<double, D, D> th = Eigen::Matrix<double, D, D>::Zero();
        for (int a = 0; a < static_cast<int>(t.map_val.cols()); ++a)
          for (int i = 0; i < D; ++i) {
            pos(i) += x(el.nodes[a] * D + i) * t.map_val(q, a);
            for (int l = 0; l < D; ++l)
              th(i, l) += x(el.nodes[a] * D + i) * t.map_gref[l](q, a);
          }
        if (spec.box_lo.size() == D) {
          bool in_box = true;
          for (int i = 0; i < D; ++i)
            if (pos(i) < spec.box_lo(i) || pos(i) > spec.box_hi(i))
              in_box = false;
          if (!in_box) continue;
        }
        double wv = 0.0;
        for (int j = 0; j < ntr; ++j)
          wv += u(trial_.offset[e] + j * M + spec.comp) * t.trial_val(q, j);
        const double w = t.wdet(q) * th.determinant();
        total += w * wv;
        if (grad_u)
          for (int j = 0; j < ntr; ++j)
            (*grad_u)(trial_.offset[e] + j * M + spec.comp) +=
                w * t.trial_val(q, j);
      }
    }
    return total;
  }

  // boundary QoIs
  if constexpr (Model::ncomp != 4) {
    throw std::invalid_argument("boundary QoIs require the NS model");
  } else {
    std::vector<char> active(topo.boundary_names.size(), 0);
    for (const std::string& name : spec.tags) active[topo.boundary_tag(name)] = 1;
    Eigen::VectorXd sigma;
    if (spec.use_lifted) sigma = lift(u, x);

    for (size_t f = 0; f < topo.faces.size(); ++f) {
      const FaceTopo& ft = topo.faces[f];
      if (ft.btag < 0 || !active[ft.btag]) continue;
      const FaceTab& t = ftabs_[f];
      const SideTab& st = t.side[0];
      const int e = ft.elem[0];
      const ElementTopo& el = topo.elements[e];
      const int ntr = static_cast<int>(st.trial_val.cols());

      for (int q = 0; q < t.nq; ++q) {
        double N[D];
        for (int i = 0; i < D; ++i) N[i] = t.N(q, i);
        // inputs
        constexpr int NQ = M + M * D;
        using SD = Dual<NQ>;
        SD W[M], Q[M * D];
        for (int c = 0; c < M; ++c) {
          double wv = 0.0, g;
          for (int j = 0; j < ntr; ++j)
            wv += u(trial_.offset[e] + j * M + c) * st.trial_val(q, j);
          W[c] = grad_u ? SD::seed(wv, c) : SD(wv);
          for (int l = 0; l < D; ++l) {
            g = 0.0;
            for (int j = 0; j < ntr; ++j)
              g += u(trial_.offset[e] + j * M + c) * st.trial_gref[l](q, j);
            Q[c * D + l] = grad_u ? SD::seed(g, M + c * D + l) : SD(g);
          }
        }
        double th[D * D];
        Eigen::VectorXd pos = Eigen::VectorXd::Zero(D);
        for (int i = 0; i < D; ++i)
          for (int l = 0; l < D; ++l) {
            double v = 0.0;
            for (int a = 0; a < static_cast<int>(st.map_val.cols()); ++a)
              v += x(el.nodes[a] * D + i) * st.map_gref[l](q, a);
            th[i * D + l] = v;
          }
        for (int i = 0; i < D; ++i)
          for (int a = 0; a < static_cast<int>(st.map_val.cols()); ++a)
            pos(i) += x(el.nodes[a] * D + i) * st.map_val(q, a);
        MappingAlgebra<double, D> map;
        map.compute(th);
        double ntil[D], nunit[D];
        conormal<double, D>(map, N, ntil, nunit);
        double nmag = 0.0;
        for (int i = 0; i < D; ++i) nmag += ntil[i] * ntil[i];
        nmag = std::sqrt(nmag);
        const double wphys = t.wds(q) * nmag;  // physical surface measure

        // physical viscous flux rows: tau (momentum), energy row
        SD fvis[M * D];
        if (spec.use_lifted) {
          // gather sigma_ref, convert to the physical flux
          SD sref[M * D];
          for (int o = 0; o < M * D; ++o) sref[o] = 0.0;
          for (int j = 0; j < ntr; ++j)
            for (int c = 0; c < M; ++c)
              for (int l = 0; l < D; ++l)
                sref[c * D + l] +=
                    sigma((trial_.offset[e] + j * M + c) * D + l) *
                    st.trial_val(q, j);
          // F_phys = (1/det) F_ref Theta^T
          for (int c = 0; c < M; ++c)
            for (int jj = 0; jj < D; ++jj) {
              SD acc = 0.0;
              for (int k = 0; k < D; ++k)
                acc += sref[c * D + k] * map.theta[jj * D + k];
              fvis[c * D + jj] = acc / map.det;
            }
        } else {
          SD qphys[M * D];
          SD thd[D * D];
          for (int i = 0; i < D * D; ++i) thd[i] = th[i];
          MappingAlgebra<SD, D> mapd;
          mapd.compute(thd);
          physical_gradient<SD, M, D>(mapd, Q, qphys);
          mdl.flux_visc(W, qphys, 0.0, fvis);
        }

        const SD P = mdl.pressure(W);
        SD integrand = 0.0;
        if (spec.kind == QoISpec::Kind::Drag) {
          // (P n - tau n) . dir
          for (int i = 0; i < D; ++i) {
            SD tn = 0.0;
            for (int j = 0; j < D; ++j)
              tn += fvis[(1 + i) * D + j] * nunit[j];
            integrand += (P * nunit[i] - tn) * spec.direction(i);
          }
        } else {  // HeatFlux: q . n with q = tau v - (energy viscous row)
          const SD vx = W[1] / W[0], vy = W[2] / W[0];
          for (int j = 0; j < D; ++j) {
            const SD qj =
                fvis[1 * D + j] * vx + fvis[2 * D + j] * vy - fvis[3 * D + j];
            integrand += qj * nunit[j];
          }
        }
        total += wphys * integrand.val;
        if (profile) {
          BoundarySample bs;
          bs.pos = pos;
          bs.value = integrand.val;
          profile->push_back(bs);
        }
        if (grad_u) {
          for (int j = 0; j < ntr; ++j)
            for (int cc = 0; cc < M; ++cc) {
              double dd = integrand.der[cc] * st.trial_val(q, j);
              for (int l = 0; l < D; ++l)
                dd += integrand.der[M + cc * D + l] * st.trial_gref[l](q, j);
              (*grad_u)(trial_.offset[e] + j * M + cc) += wphys * dd;
            }
        }
      }
    }
    return total;
  }
}

// ---------------------------------------------------------------------------
// Type-erased wrapper

struct IpdgAssembler::Impl {
  ModelVariant model;
  std::variant<std::unique_ptr<AsmImpl<BurgersSteady>>,
               std::unique_ptr<AsmImpl<BurgersSpaceTime>>,
               std::unique_ptr<AsmImpl<NavierStokes2D>>>
      impl;

  template <class F>
  decltype(auto) visit(F&& fn) const {
    return std::visit(
        [&](const auto& p) -> decltype(auto) { return fn(*p); }, impl);
  }
};

IpdgAssembler::IpdgAssembler(ModelVariant model, const MeshTopology& topo,
                             const PDistribution& p, int delta, int Delta,
                             double c_ip, std::vector<BoundaryCondition> bcs,
                             int nthreads)
    : impl_(std::make_unique<Impl>()) {
  impl_->model = std::move(model);
  std::visit(
      [&](auto& m) {
        using Model = std::decay_t<decltype(m)>;
        impl_->impl = std::make_unique<AsmImpl<Model>>(
            &m, topo, p, delta, Delta, c_ip, std::move(bcs), nthreads);
      },
      impl_->model);
}

IpdgAssembler::~IpdgAssembler() = default;
IpdgAssembler::IpdgAssembler(IpdgAssembler&&) noexcept = default;

const MeshTopology& IpdgAssembler::topology() const {
  return impl_->visit([](const auto& a) -> const MeshTopology& {
    return a.topology();
  });
}
const ModelVariant& IpdgAssembler::model() const { return impl_->model; }
ModelVariant& IpdgAssembler::model() { return impl_->model; }
const Space& IpdgAssembler::trial() const {
  return impl_->visit([](const auto& a) -> const Space& { return a.trial(); });
}
const Space& IpdgAssembler::test() const {
  return impl_->visit([](const auto& a) -> const Space& { return a.test(); });
}
const PDistribution& IpdgAssembler::degrees() const {
  return impl_->visit(
      [](const auto& a) -> const PDistribution& { return a.degrees(); });
}
int IpdgAssembler::delta() const {
  return impl_->visit([](const auto& a) { return a.delta(); });
}
int IpdgAssembler::test_enrichment() const {
  return impl_->visit([](const auto& a) { return a.Delta(); });
}
double IpdgAssembler::c_ip() const {
  return impl_->visit([](const auto& a) { return a.c_ip(); });
}
const std::vector<BoundaryCondition>& IpdgAssembler::boundary_conditions()
    const {
  return impl_->visit(
      [](const auto& a) -> const std::vector<BoundaryCondition>& {
        return a.bcs();
      });
}

Assembly IpdgAssembler::assemble(const Eigen::VectorXd& u,
                                 const Eigen::VectorXd& x, bool jac_u,
                                 bool jac_x, const Eigen::VectorXd& av) const {
  return impl_->visit(
      [&](const auto& a) { return a.assemble(u, x, jac_u, jac_x, av); });
}

Eigen::VectorXd IpdgAssembler::lift_viscous_flux(const Eigen::VectorXd& u,
                                                 const Eigen::VectorXd& x)
    const {
  return impl_->visit([&](const auto& a) { return a.lift(u, x); });
}

double IpdgAssembler::qoi(const QoISpec& spec, const Eigen::VectorXd& u,
                          const Eigen::VectorXd& x) const {
  return impl_->visit(
      [&](const auto& a) { return a.qoi(spec, u, x, nullptr, nullptr); });
}

Eigen::VectorXd IpdgAssembler::qoi_gradient_u(const QoISpec& spec,
                                              const Eigen::VectorXd& u,
                                              const Eigen::VectorXd& x) const {
  Eigen::VectorXd g;
  impl_->visit([&](const auto& a) { return a.qoi(spec, u, x, &g, nullptr); });
  return g;
}

std::vector<BoundarySample> IpdgAssembler::qoi_boundary_profile(
    const QoISpec& spec, const Eigen::VectorXd& u,
    const Eigen::VectorXd& x) const {
  std::vector<BoundarySample> prof;
  impl_->visit(
      [&](const auto& a) { return a.qoi(spec, u, x, nullptr, &prof); });
  return prof;
}

Eigen::VectorXd inviscid_numflux(const ModelVariant& model,
                                 const Eigen::VectorXd& wp,
                                 const Eigen::VectorXd& wm,
                                 const Eigen::VectorXd& N,
                                 const Eigen::MatrixXd& theta) {
  return std::visit(
      [&](const auto& mdl) {
        using Model = std::decay_t<decltype(mdl)>;
        constexpr int M = Model::ncomp, D = Model::dim;
        double th[D * D], Nd[D];
        for (int i = 0; i < D; ++i)
          for (int j = 0; j < D; ++j) th[i * D + j] = theta(i, j);
        for (int i = 0; i < D; ++i) Nd[i] = N(i);
        MappingAlgebra<double, D> map;
        map.compute(th);
        double fn[M];
        lf_inviscid(mdl, map, wp.data(), wm.data(), Nd, fn);
        Eigen::VectorXd out(M);
        for (int c = 0; c < M; ++c) out(c) = fn[c];
        return out;
      },
      model);
}

ViscousNumFlux viscous_numflux(const ModelVariant& model,
                               const Eigen::VectorXd& wp,
                               const Eigen::VectorXd& wm,
                               const Eigen::MatrixXd& qp,
                               const Eigen::MatrixXd& qm,
                               const Eigen::VectorXd& N,
                               const Eigen::MatrixXd& theta_p,
                               const Eigen::MatrixXd& theta_m, double h_face,
                               int p_face, int delta, double c_ip) {
  return std::visit(
      [&](const auto& mdl) {
        using Model = std::decay_t<decltype(mdl)>;
        constexpr int M = Model::ncomp, D = Model::dim;
        double thp[D * D], thm[D * D], Nd[D];
        for (int i = 0; i < D; ++i)
          for (int j = 0; j < D; ++j) {
            thp[i * D + j] = theta_p(i, j);
            thm[i * D + j] = theta_m(i, j);
          }
        for (int i = 0; i < D; ++i) Nd[i] = N(i);
        MappingAlgebra<double, D> mapp, mapm;
        mapp.compute(thp);
        mapm.compute(thm);
        double Qp[M * D], Qm[M * D];
        for (int c = 0; c < M; ++c)
          for (int l = 0; l < D; ++l) {
            Qp[c * D + l] = qp(c, l);
            Qm[c * D + l] = qm(c, l);
          }
        double qphys[M * D], fv[M * D], fvp_ref[M * D], fvm_ref[M * D];
        physical_gradient<double, M, D>(mapp, Qp, qphys);
        mdl.flux_visc(wp.data(), qphys, 0.0, fv);
        transform_flux<double, M, D>(mapp, fv, fvp_ref);
        physical_gradient<double, M, D>(mapm, Qm, qphys);
        mdl.flux_visc(wm.data(), qphys, 0.0, fv);
        transform_flux<double, M, D>(mapm, fv, fvm_ref);
        double dw[M];
        for (int c = 0; c < M; ++c) dw[c] = wp(c) - wm(c);
        double dbp[M * D], dbm[M * D];
        dbar_jump(mdl, mapp, wp.data(), dw, Nd, 0.0, false, dbp);
        dbar_jump(mdl, mapm, wm.data(), dw, Nd, 0.0, false, dbm);
        const double pen = c_ip * (p_face + delta) / h_face;
        ViscousNumFlux out;
        out.sigma_n.resize(M);
        out.penalty_n.resize(M);
        for (int c = 0; c < M; ++c) {
          double sn = 0.0, pn = 0.0;
          for (int j = 0; j < D; ++j) {
            sn += 0.5 * (fvp_ref[c * D + j] + fvm_ref[c * D + j]) * Nd[j];
            pn += pen * 0.5 * (dbp[c * D + j] + dbm[c * D + j]) * Nd[j];
          }
          out.sigma_n(c) = sn - pn;
          out.penalty_n(c) = pn;
        }
        return out;
      },
      model);
}

std::vector<char> wall_elements(const MeshTopology& topo,
                                const std::vector<std::string>& names) {
  std::vector<char> tags(topo.boundary_names.size(), 0);
  for (const std::string& n : names) tags[topo.boundary_tag(n)] = 1;
  std::vector<char> out(topo.nelems(), 0);
  for (const FaceTopo& ft : topo.faces)
    if (ft.btag >= 0 && tags[ft.btag]) out[ft.elem[0]] = 1;
  return out;
}

Eigen::VectorXd apply_elemental_weight(const Space& test,
                                       const Eigen::VectorXd& weight,
                                       const Eigen::VectorXd& R) {
  if (weight.size() == 0) return R;
  Eigen::VectorXd out = R;
  for (int e = 0; e < test.topo->nelems(); ++e)
    out.segment(test.offset[e], test.elem_ndof(e)) *= weight(e);
  return out;
}

}  // namespace hoist
