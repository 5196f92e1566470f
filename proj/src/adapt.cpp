#include "hoist/adapt.hpp"

#include <Eigen/SparseLU>

#include "hoist/quadrature.hpp"

namespace hoist {

IndicatorField indicator_uwr(const IpdgAssembler& assembler,
                             const Eigen::VectorXd& u,
                             const Eigen::VectorXd& x) {
  const Assembly a = assembler.assemble(u, x, false, false);
  const Space& test = assembler.test();
  IndicatorField out;
  out.kind = IndicatorKind::Uwr;
  out.s.resize(test.topo->nelems());
  for (int e = 0; e < test.topo->nelems(); ++e)
    out.s(e) = a.R.segment(test.offset[e], test.elem_ndof(e)).norm();
  return out;
}

IndicatorField indicator_dwr(const ModelVariant& model,
                             const MeshTopology& topo, const PDistribution& p,
                             double c_ip,
                             const std::vector<BoundaryCondition>& bcs,
                             const QoISpec& qoi, const Eigen::VectorXd& u,
                             const Eigen::VectorXd& x, int nthreads) {
  // fine-space (delta = 1) square system for the adjoint
  IpdgAssembler fine(model, topo, p, 1, 1, c_ip, bcs, nthreads);
  // enriched residual paired with the adjoint (Delta = 1)
  IpdgAssembler enr(model, topo, p, 0, 1, c_ip, bcs, nthreads);

  const Space coarse = build_space(topo, p, 0, fine.trial().ncomp);
  const Eigen::VectorXd ufine = prolongate(u, coarse, fine.trial());

  const Assembly af = fine.assemble(ufine, x, true, false);
  const Eigen::VectorXd dJ = fine.qoi_gradient_u(qoi, ufine, x);

  Eigen::SparseMatrix<double> At = af.dr_du.transpose();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(At);
  if (lu.info() != Eigen::Success)
    throw std::runtime_error("dwr adjoint solve failed (singular Jacobian)");
  const Eigen::VectorXd psi = lu.solve(dJ);

  const Assembly ae = enr.assemble(u, x, false, false);
  const Space& test = enr.test();
  IndicatorField out;
  out.kind = IndicatorKind::Dwr;
  out.s.resize(topo.nelems());
  for (int e = 0; e < topo.nelems(); ++e) {
    const int n = test.elem_ndof(e);
    out.s(e) = std::abs(psi.segment(test.offset[e], n)
                            .dot(ae.R.segment(test.offset[e], n)));
  }
  return out;
}

IndicatorField indicator_fbs(const ModelVariant& model,
                             const MeshTopology& topo, const PDistribution& p,
                             const Eigen::VectorXd& u,
                             const Eigen::VectorXd& x) {
  const int m = model_ncomp(model);
  const int d = topo.dim;
  const Space space = build_space(topo, p, 0, m);
  IndicatorField out;
  out.kind = IndicatorKind::Fbs;
  out.s.resize(topo.nelems());
  for (int e = 0; e < topo.nelems(); ++e) {
    const ElementTopo& el = topo.elements[e];
    const NodalBasis& fb = basis_cache(el.kind, space.degree[e]);
    const NodalBasis& mb = basis_cache(el.kind, el.q);
    const QuadratureRule rule =
        quadrature(el.kind, 2 * space.degree[e] + el.q);
    const std::vector<Eigen::MatrixXd> gpar = fb.grad(rule.points);
    const std::vector<Eigen::MatrixXd> mpar = mb.grad(rule.points);
    double acc = 0.0;
    for (int q = 0; q < rule.size(); ++q) {
      Eigen::MatrixXd jphys = Eigen::MatrixXd::Zero(d, d);
      for (int a = 0; a < mb.size(); ++a)
        for (int i = 0; i < d; ++i)
          for (int l = 0; l < d; ++l)
            jphys(i, l) += x(el.nodes[a] * d + i) * mpar[l](q, a);
      const double det = jphys.determinant();
      if (det <= 0.0)
        throw InvertedMapping("fbs indicator on inverted element");
      // physical gradient: (parent grad of u) * Jphys^{-1}
      Eigen::MatrixXd gu = Eigen::MatrixXd::Zero(m, d);
      for (int j = 0; j < fb.size(); ++j)
        for (int c = 0; c < m; ++c)
          for (int l = 0; l < d; ++l)
            gu(c, l) += u(space.offset[e] + j * m + c) * gpar[l](q, j);
      const Eigen::MatrixXd gphys = gu * jphys.inverse();
      acc += rule.weights(q) * det * gphys.norm();
    }
    out.s(e) = acc;
  }
  return out;
}

PDistribution p_refine(const PDistribution& p, const IndicatorField& s,
                       double tau, int p_max) {
  if (tau <= 0.0 || tau >= 1.0)
    throw std::invalid_argument("p_refine: tau must be in (0,1)");
  const double smax = s.s.maxCoeff();
  PDistribution out = p;
  if (smax <= 0.0) return out;
  for (size_t e = 0; e < p.size(); ++e)
    if (s.s(e) > tau * smax && p[e] < p_max) out[e] = p[e] + 1;
  return out;
}

}  // namespace hoist
