#include "hoist/fespace.hpp"

#include <stdexcept>

#include "hoist/quadrature.hpp"

namespace hoist {

Space build_space(const MeshTopology& topo, const PDistribution& p,
                  int enrichment, int ncomp) {
  if (enrichment < 0) throw std::invalid_argument("negative enrichment");
  if (static_cast<int>(p.size()) != topo.nelems())
    throw std::invalid_argument("degree map size mismatch");
  Space s;
  s.topo = &topo;
  s.ncomp = ncomp;
  s.degree.resize(topo.nelems());
  s.offset.resize(topo.nelems());
  int dim = 0;
  for (int e = 0; e < topo.nelems(); ++e) {
    if (p[e] < 1) throw std::invalid_argument("degree map must be >= 1");
    s.degree[e] = p[e] + enrichment;
    s.offset[e] = dim;
    dim += ncomp * basis_size(topo.elements[e].kind, s.degree[e]);
  }
  s.dim = dim;
  return s;
}

Eigen::SparseMatrix<double> prolongation_matrix(const Space& from,
                                                const Space& to) {
  if (from.topo != to.topo)
    throw std::invalid_argument("prolongation requires a common topology");
  if (from.ncomp != to.ncomp)
    throw std::invalid_argument("prolongation component mismatch");
  std::vector<Eigen::Triplet<double>> trips;
  for (int e = 0; e < from.topo->nelems(); ++e) {
    if (to.degree[e] < from.degree[e])
      throw std::invalid_argument("prolongation cannot decrease the degree");
    const ParentKind kind = from.topo->elements[e].kind;
    const NodalBasis& coarse = basis_cache(kind, from.degree[e]);
    const NodalBasis& fine = basis_cache(kind, to.degree[e]);
    const Eigen::MatrixXd P = coarse.eval(fine.nodes());  // nfine x ncoarse
    const int m = from.ncomp;
    for (int i = 0; i < P.rows(); ++i)
      for (int j = 0; j < P.cols(); ++j) {
        if (P(i, j) == 0.0) continue;
        for (int c = 0; c < m; ++c)
          trips.emplace_back(to.offset[e] + i * m + c,
                             from.offset[e] + j * m + c, P(i, j));
      }
  }
  Eigen::SparseMatrix<double> Q(to.dim, from.dim);
  Q.setFromTriplets(trips.begin(), trips.end());
  return Q;
}

Eigen::VectorXd prolongate(const Eigen::VectorXd& u, const Space& from,
                           const Space& to) {
  if (u.size() != from.dim)
    throw std::invalid_argument("prolongate: coefficient size mismatch");
  return prolongation_matrix(from, to) * u;
}

Eigen::MatrixXd inclusion_matrix(ParentKind kind, int coarse_deg, int fine_deg,
                                 int ncomp) {
  const NodalBasis& coarse = basis_cache(kind, coarse_deg);
  const NodalBasis& fine = basis_cache(kind, fine_deg);
  const Eigen::MatrixXd P = coarse.eval(fine.nodes());  // nfine x ncoarse
  Eigen::MatrixXd C =
      Eigen::MatrixXd::Zero(P.rows() * ncomp, P.cols() * ncomp);
  for (int i = 0; i < P.rows(); ++i)
    for (int j = 0; j < P.cols(); ++j)
      for (int c = 0; c < ncomp; ++c)
        C(i * ncomp + c, j * ncomp + c) = P(i, j);
  return C;
}

Eigen::SparseMatrix<double> assemble_mass_matrix(const Space& space,
                                                 const Eigen::VectorXd& x) {
  const MeshTopology& topo = *space.topo;
  const int d = topo.dim;
  std::vector<Eigen::Triplet<double>> trips;
  for (int e = 0; e < topo.nelems(); ++e) {
    const ElementTopo& el = topo.elements[e];
    const NodalBasis& fb = basis_cache(el.kind, space.degree[e]);
    const QuadratureRule rule =
        quadrature(el.kind, 2 * space.degree[e] + el.q);
    const Eigen::MatrixXd phi = fb.eval(rule.points);
    const NodalBasis& mb = basis_cache(el.kind, el.q);
    const std::vector<Eigen::MatrixXd> dmap = mb.grad(rule.points);
    const int nb = fb.size();
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(nb, nb);
    for (int q = 0; q < rule.size(); ++q) {
      Eigen::MatrixXd jphys = Eigen::MatrixXd::Zero(d, d);
      for (int a = 0; a < mb.size(); ++a)
        for (int i = 0; i < d; ++i)
          for (int l = 0; l < d; ++l)
            jphys(i, l) += x(el.nodes[a] * d + i) * dmap[l](q, a);
      const double w = rule.weights(q) * jphys.determinant();
      for (int i = 0; i < nb; ++i)
        for (int j = 0; j < nb; ++j) M(i, j) += w * phi(q, i) * phi(q, j);
    }
    const int m = space.ncomp;
    for (int i = 0; i < nb; ++i)
      for (int j = 0; j < nb; ++j)
        for (int c = 0; c < m; ++c)
          trips.emplace_back(space.offset[e] + i * m + c,
                             space.offset[e] + j * m + c, M(i, j));
  }
  Eigen::SparseMatrix<double> M(space.dim, space.dim);
  M.setFromTriplets(trips.begin(), trips.end());
  return M;
}

Eigen::VectorXd eval_field(const Space& space, const Eigen::VectorXd& u,
                           int elem, const Eigen::VectorXd& parent_pt) {
  const ElementTopo& el = space.topo->elements[elem];
  const NodalBasis& fb = basis_cache(el.kind, space.degree[elem]);
  const Eigen::MatrixXd phi = fb.eval(parent_pt.transpose());
  Eigen::VectorXd w = Eigen::VectorXd::Zero(space.ncomp);
  for (int j = 0; j < fb.size(); ++j)
    for (int c = 0; c < space.ncomp; ++c)
      w(c) += u(space.offset[elem] + j * space.ncomp + c) * phi(0, j);
  return w;
}

PointLocation locate_point(const MeshTopology& topo, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& pt, double tol) {
  const int d = topo.dim;
  PointLocation loc;
  for (int e = 0; e < topo.nelems(); ++e) {
    const ElementTopo& el = topo.elements[e];
    // bounding box with slack
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(d, 1e300);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(d, -1e300);
    for (int n : el.nodes)
      for (int i = 0; i < d; ++i) {
        lo(i) = std::min(lo(i), x(n * d + i));
        hi(i) = std::max(hi(i), x(n * d + i));
      }
    const double slack = 0.2 * (hi - lo).norm() + tol;
    bool inside_box = true;
    for (int i = 0; i < d; ++i)
      if (pt(i) < lo(i) - slack || pt(i) > hi(i) + slack) inside_box = false;
    if (!inside_box) continue;

    // Newton for parent coordinates of pt under the element mapping
    const NodalBasis& mb = basis_cache(el.kind, el.q);
    Eigen::VectorXd xi = Eigen::VectorXd::Constant(d, el.kind == ParentKind::Triangle ? 0.3 : 0.5);
    bool converged = false;
    for (int it = 0; it < 30; ++it) {
      const Eigen::MatrixXd phi = mb.eval(xi.transpose());
      const std::vector<Eigen::MatrixXd> dphi = mb.grad(xi.transpose());
      Eigen::VectorXd pos = Eigen::VectorXd::Zero(d);
      Eigen::MatrixXd J = Eigen::MatrixXd::Zero(d, d);
      for (int a = 0; a < mb.size(); ++a)
        for (int i = 0; i < d; ++i) {
          pos(i) += x(el.nodes[a] * d + i) * phi(0, a);
          for (int l = 0; l < d; ++l)
            J(i, l) += x(el.nodes[a] * d + i) * dphi[l](0, a);
        }
      const Eigen::VectorXd res = pos - pt;
      if (res.norm() < tol) {
        converged = true;
        break;
      }
      xi -= J.fullPivLu().solve(res);
      for (int i = 0; i < d; ++i) xi(i) = std::clamp(xi(i), -0.5, 1.5);
    }
    if (!converged) continue;
    // inside the parent element?
    const double t = 1e-9;
    bool inside = true;
    switch (el.kind) {
      case ParentKind::Segment:
        inside = xi(0) > -t && xi(0) < 1.0 + t;
        break;
      case ParentKind::Triangle:
        inside = xi(0) > -t && xi(1) > -t && xi(0) + xi(1) < 1.0 + t;
        break;
      case ParentKind::Quad:
        inside = xi(0) > -t && xi(0) < 1.0 + t && xi(1) > -t && xi(1) < 1.0 + t;
        break;
    }
    if (inside) {
      loc.elem = e;
      loc.parent = xi;
      return loc;
    }
  }
  return loc;
}

double l2_error(const Space& space, const Eigen::VectorXd& u,
                const Eigen::VectorXd& x,
                const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>&
                    uref_phys,
                int extra_degree) {
  const MeshTopology& topo = *space.topo;
  const int d = topo.dim;
  double acc = 0.0;
  for (int e = 0; e < topo.nelems(); ++e) {
    const ElementTopo& el = topo.elements[e];
    const NodalBasis& fb = basis_cache(el.kind, space.degree[e]);
    const NodalBasis& mb = basis_cache(el.kind, el.q);
    const QuadratureRule rule =
        quadrature(el.kind, 2 * space.degree[e] + extra_degree);
    const Eigen::MatrixXd phi = fb.eval(rule.points);
    const Eigen::MatrixXd mphi = mb.eval(rule.points);
    const std::vector<Eigen::MatrixXd> dmap = mb.grad(rule.points);
    for (int q = 0; q < rule.size(); ++q) {
      Eigen::VectorXd pos = Eigen::VectorXd::Zero(d);
      Eigen::MatrixXd jref = Eigen::MatrixXd::Zero(d, d);
      for (int a = 0; a < mb.size(); ++a) {
        for (int i = 0; i < d; ++i) {
          pos(i) += x(el.nodes[a] * d + i) * mphi(q, a);
          for (int l = 0; l < d; ++l)
            jref(i, l) += topo.ref_nodes(el.nodes[a], i) * dmap[l](q, a);
        }
      }
      Eigen::VectorXd w = Eigen::VectorXd::Zero(space.ncomp);
      for (int j = 0; j < fb.size(); ++j)
        for (int c = 0; c < space.ncomp; ++c)
          w(c) += u(space.offset[e] + j * space.ncomp + c) * phi(q, j);
      const Eigen::VectorXd diff = w - uref_phys(pos);
      acc += rule.weights(q) * jref.determinant() * diff.squaredNorm();
    }
  }
  return std::sqrt(acc);
}

Eigen::VectorXd interpolate(const Space& space, const Eigen::VectorXd& x,
                            const std::function<Eigen::VectorXd(
                                const Eigen::VectorXd&)>& f_phys) {
  const MeshTopology& topo = *space.topo;
  const int d = topo.dim;
  Eigen::VectorXd u(space.dim);
  for (int e = 0; e < topo.nelems(); ++e) {
    const ElementTopo& el = topo.elements[e];
    const NodalBasis& fb = basis_cache(el.kind, space.degree[e]);
    const NodalBasis& mb = basis_cache(el.kind, el.q);
    const Eigen::MatrixXd mphi = mb.eval(fb.nodes());
    for (int j = 0; j < fb.size(); ++j) {
      Eigen::VectorXd pos = Eigen::VectorXd::Zero(d);
      for (int a = 0; a < mb.size(); ++a)
        for (int i = 0; i < d; ++i)
          pos(i) += x(el.nodes[a] * d + i) * mphi(j, a);
      const Eigen::VectorXd w = f_phys(pos);
      for (int c = 0; c < space.ncomp; ++c)
        u(space.offset[e] + j * space.ncomp + c) = w(c);
    }
  }
  return u;
}

}  // namespace hoist
