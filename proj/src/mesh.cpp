#include "hoist/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>

#include "hoist/dual.hpp"
#include "hoist/quadrature.hpp"

namespace hoist {

namespace {
constexpr double kNodeTol = 1e-10;
}

const ParentNodeSets& parent_node_sets(ParentKind kind, int q) {
  static std::map<std::pair<int, int>, ParentNodeSets> cache;
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  auto key = std::make_pair(static_cast<int>(kind), q);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  ParentNodeSets sets;
  const Eigen::MatrixXd pts = nodal_points(kind, q);
  const int nv = parent_nvertices(kind);
  sets.vertex_node.assign(nv, -1);
  for (int v = 0; v < nv; ++v) {
    const Eigen::Vector2d vx = parent_vertex(kind, v);
    for (int n = 0; n < pts.rows(); ++n) {
      double d = std::abs(pts(n, 0) - vx(0));
      if (pts.cols() > 1) d += std::abs(pts(n, 1) - vx(1));
      if (d < kNodeTol) {
        sets.vertex_node[v] = n;
        break;
      }
    }
    if (sets.vertex_node[v] < 0)
      throw std::logic_error("nodal set is missing a vertex point");
  }
  const int nf = parent_nfaces(kind);
  sets.face_nodes.resize(nf);
  for (int f = 0; f < nf; ++f) {
    const ParentFace pf = parent_face(kind, f);
    for (int n = 0; n < pts.rows(); ++n) {
      if (kind == ParentKind::Segment) {
        if (std::abs(pts(n, 0) - pf.origin(0)) < kNodeTol)
          sets.face_nodes[f].push_back(n);
      } else {
        const Eigen::Vector2d p(pts(n, 0), pts(n, 1));
        const Eigen::Vector2d rel = p - pf.origin;
        const double along = rel.dot(pf.tangent) / pf.tangent.squaredNorm();
        const double off = std::abs(rel.dot(pf.normal));
        if (off < kNodeTol && along > -kNodeTol && along < 1.0 + kNodeTol)
          sets.face_nodes[f].push_back(n);
      }
    }
  }
  return cache.emplace(key, std::move(sets)).first->second;
}

int MeshTopology::boundary_tag(const std::string& name) const {
  for (size_t i = 0; i < boundary_names.size(); ++i)
    if (boundary_names[i] == name) return static_cast<int>(i);
  throw std::invalid_argument("unknown boundary name: " + name);
}

std::vector<int> MeshTopology::face_vertex_nodes(int e, int f) const {
  const ElementTopo& el = elements[e];
  const ParentNodeSets& sets = parent_node_sets(el.kind, el.q);
  const ParentFace pf = parent_face(el.kind, f);
  if (el.kind == ParentKind::Segment)
    return {el.nodes[sets.vertex_node[pf.vertices[0]]]};
  return {el.nodes[sets.vertex_node[pf.vertices[0]]],
          el.nodes[sets.vertex_node[pf.vertices[1]]]};
}

void MeshTopology::build_faces() {
  faces.clear();
  std::map<std::vector<int>, int> open;  // sorted vertex key -> face index
  for (int e = 0; e < nelems(); ++e) {
    const int nf = parent_nfaces(elements[e].kind);
    for (int f = 0; f < nf; ++f) {
      std::vector<int> verts = face_vertex_nodes(e, f);
      std::vector<int> key = verts;
      std::sort(key.begin(), key.end());
      auto it = open.find(key);
      if (it == open.end()) {
        FaceTopo ft;
        ft.elem[0] = e;
        ft.local_face[0] = f;
        open.emplace(key, static_cast<int>(faces.size()));
        faces.push_back(ft);
      } else {
        FaceTopo& ft = faces[it->second];
        if (ft.elem[1] >= 0)
          throw std::runtime_error("face shared by more than two elements");
        ft.elem[1] = e;
        ft.local_face[1] = f;
        const std::vector<int> v0 =
            face_vertex_nodes(ft.elem[0], ft.local_face[0]);
        if (dim == 1) {
          ft.reversed = false;
        } else {
          ft.reversed = (verts[0] == v0[1] && verts[1] == v0[0]);
          if (!ft.reversed && !(verts[0] == v0[0] && verts[1] == v0[1]))
            throw std::runtime_error("inconsistent face orientation");
        }
        open.erase(it);
      }
    }
  }
}

void MeshTopology::tag_boundary(
    const std::string& name,
    const std::function<bool(const Eigen::VectorXd&)>& pred) {
  int tag = -1;
  for (size_t i = 0; i < boundary_names.size(); ++i)
    if (boundary_names[i] == name) tag = static_cast<int>(i);
  if (tag < 0) {
    tag = static_cast<int>(boundary_names.size());
    boundary_names.push_back(name);
  }
  for (FaceTopo& ft : faces) {
    if (ft.elem[1] >= 0 || ft.btag >= 0) continue;
    const ElementTopo& el = elements[ft.elem[0]];
    const ParentNodeSets& sets = parent_node_sets(el.kind, el.q);
    bool all = true;
    for (int ln : sets.face_nodes[ft.local_face[0]]) {
      if (!pred(ref_nodes.row(el.nodes[ln]).transpose())) {
        all = false;
        break;
      }
    }
    if (all) ft.btag = tag;
  }
}

void split_boundary_tag(
    MeshTopology& topo, const std::string& old_name,
    const std::string& new_name,
    const std::function<bool(const Eigen::VectorXd&)>& pred) {
  const int old_tag = topo.boundary_tag(old_name);
  int tag = -1;
  for (size_t i = 0; i < topo.boundary_names.size(); ++i)
    if (topo.boundary_names[i] == new_name) tag = static_cast<int>(i);
  if (tag < 0) {
    tag = static_cast<int>(topo.boundary_names.size());
    topo.boundary_names.push_back(new_name);
  }
  for (FaceTopo& ft : topo.faces) {
    if (ft.btag != old_tag) continue;
    const ElementTopo& el = topo.elements[ft.elem[0]];
    const ParentNodeSets& sets = parent_node_sets(el.kind, el.q);
    bool all = true;
    for (int ln : sets.face_nodes[ft.local_face[0]])
      if (!pred(topo.ref_nodes.row(el.nodes[ln]).transpose())) {
        all = false;
        break;
      }
    if (all) ft.btag = tag;
  }
}

void MeshTopology::check_valid() const {
  for (const FaceTopo& ft : faces) {
    if (ft.elem[1] < 0 && ft.btag < 0)
      throw std::runtime_error("untagged boundary face");
    if (ft.elem[1] >= 0 && ft.btag >= 0)
      throw std::runtime_error("interior face carries a boundary tag");
  }
  for (const ElementTopo& el : elements)
    for (int n : el.nodes)
      if (n < 0 || n >= nnodes())
        throw std::runtime_error("connectivity index out of range");
}

Eigen::VectorXd MeshTopology::flat_ref_coords() const {
  Eigen::VectorXd x(nx());
  for (int n = 0; n < nnodes(); ++n)
    for (int i = 0; i < dim; ++i) x(n * dim + i) = ref_nodes(n, i);
  return x;
}

// --- parametrization ---------------------------------------------------------

MeshParametrization::MeshParametrization(
    const MeshTopology& topo, const std::map<std::string, Chart>& tag_charts,
    const Eigen::VectorXd& x0, bool freeze_all)
    : dim_(topo.dim) {
  const int nn = topo.nnodes();
  std::vector<std::set<int>> node_tags(nn);
  for (const FaceTopo& ft : topo.faces) {
    if (ft.btag < 0) continue;
    const ElementTopo& el = topo.elements[ft.elem[0]];
    const ParentNodeSets& sets = parent_node_sets(el.kind, el.q);
    for (int ln : sets.face_nodes[ft.local_face[0]])
      node_tags[el.nodes[ln]].insert(ft.btag);
  }

  charts_.resize(topo.boundary_names.size(), ChartFixed{});
  for (size_t t = 0; t < topo.boundary_names.size(); ++t) {
    auto it = tag_charts.find(topo.boundary_names[t]);
    if (it != tag_charts.end()) charts_[t] = it->second;
  }

  node_params_.resize(nn);
  x_fixed_ = x0;
  ny_ = 0;
  for (int n = 0; n < nn; ++n) {
    NodeParam& np = node_params_[n];
    if (freeze_all || node_tags[n].size() >= 2) {
      np.kind = NodeDofKind::Fixed;
      continue;
    }
    if (node_tags[n].empty()) {
      np.kind = NodeDofKind::Interior;
      np.y_offset = ny_;
      ny_ += dim_;
      continue;
    }
    const int tag = *node_tags[n].begin();
    np.chart = tag;
    const Chart& ch = charts_[tag];
    if (std::holds_alternative<ChartFixed>(ch) || dim_ == 1) {
      np.kind = NodeDofKind::Fixed;
    } else if (const auto* pl = std::get_if<ChartPlane>(&ch)) {
      np.kind = NodeDofKind::Planar;
      np.tangent = Eigen::Vector2d(pl->normal(1), -pl->normal(0));
      np.y_offset = ny_;
      ny_ += 1;
    } else {
      np.kind = NodeDofKind::Angular;
      np.y_offset = ny_;
      ny_ += 1;
    }
  }
}

Eigen::VectorXd MeshParametrization::apply(const Eigen::VectorXd& y) const {
  Eigen::VectorXd x = x_fixed_;
  const int nn = static_cast<int>(node_params_.size());
  for (int n = 0; n < nn; ++n) {
    const NodeParam& np = node_params_[n];
    switch (np.kind) {
      case NodeDofKind::Fixed:
        break;
      case NodeDofKind::Interior:
        for (int i = 0; i < dim_; ++i) x(n * dim_ + i) = y(np.y_offset + i);
        break;
      case NodeDofKind::Planar: {
        const auto& pl = std::get<ChartPlane>(charts_[np.chart]);
        const double t = y(np.y_offset);
        for (int i = 0; i < dim_; ++i)
          x(n * dim_ + i) = pl.point(i) + t * np.tangent(i);
        break;
      }
      case NodeDofKind::Angular: {
        const double th = y(np.y_offset);
        if (const auto* c = std::get_if<ChartCircle>(&charts_[np.chart])) {
          x(n * dim_ + 0) = c->center(0) + c->radius * std::cos(th);
          x(n * dim_ + 1) = c->center(1) + c->radius * std::sin(th);
        } else {
          const auto& el = std::get<ChartEllipse>(charts_[np.chart]);
          x(n * dim_ + 0) = el.center(0) + el.a * std::cos(th);
          x(n * dim_ + 1) = el.center(1) + el.b * std::sin(th);
        }
        break;
      }
    }
  }
  return x;
}

Eigen::SparseMatrix<double> MeshParametrization::jacobian(
    const Eigen::VectorXd& y) const {
  const int nn = static_cast<int>(node_params_.size());
  std::vector<Eigen::Triplet<double>> trips;
  for (int n = 0; n < nn; ++n) {
    const NodeParam& np = node_params_[n];
    switch (np.kind) {
      case NodeDofKind::Fixed:
        break;
      case NodeDofKind::Interior:
        for (int i = 0; i < dim_; ++i)
          trips.emplace_back(n * dim_ + i, np.y_offset + i, 1.0);
        break;
      case NodeDofKind::Planar:
        for (int i = 0; i < dim_; ++i)
          trips.emplace_back(n * dim_ + i, np.y_offset, np.tangent(i));
        break;
      case NodeDofKind::Angular: {
        const double th = y(np.y_offset);
        double a, b;
        if (const auto* c = std::get_if<ChartCircle>(&charts_[np.chart])) {
          a = c->radius;
          b = c->radius;
        } else {
          const auto& el = std::get<ChartEllipse>(charts_[np.chart]);
          a = el.a;
          b = el.b;
        }
        trips.emplace_back(n * dim_ + 0, np.y_offset, -a * std::sin(th));
        trips.emplace_back(n * dim_ + 1, np.y_offset, b * std::cos(th));
        break;
      }
    }
  }
  Eigen::SparseMatrix<double> J(nn * dim_, ny_);
  J.setFromTriplets(trips.begin(), trips.end());
  return J;
}

Eigen::VectorXd MeshParametrization::init_y(const Eigen::VectorXd& x) const {
  Eigen::VectorXd y(ny_);
  const int nn = static_cast<int>(node_params_.size());
  for (int n = 0; n < nn; ++n) {
    const NodeParam& np = node_params_[n];
    switch (np.kind) {
      case NodeDofKind::Fixed:
        break;
      case NodeDofKind::Interior:
        for (int i = 0; i < dim_; ++i) y(np.y_offset + i) = x(n * dim_ + i);
        break;
      case NodeDofKind::Planar: {
        const auto& pl = std::get<ChartPlane>(charts_[np.chart]);
        Eigen::Vector2d rel(x(n * dim_) - pl.point(0),
                            x(n * dim_ + 1) - pl.point(1));
        if (std::abs(rel.dot(Eigen::Vector2d(pl.normal(0), pl.normal(1)))) >
            1e-12 * std::max(1.0, rel.norm()))
          throw std::runtime_error("node violates its planar chart");
        y(np.y_offset) = rel.dot(np.tangent);
        break;
      }
      case NodeDofKind::Angular: {
        double u, v, res;
        if (const auto* c = std::get_if<ChartCircle>(&charts_[np.chart])) {
          u = (x(n * dim_) - c->center(0)) / c->radius;
          v = (x(n * dim_ + 1) - c->center(1)) / c->radius;
          res = std::abs(std::hypot(u, v) - 1.0);
        } else {
          const auto& el = std::get<ChartEllipse>(charts_[np.chart]);
          u = (x(n * dim_) - el.center(0)) / el.a;
          v = (x(n * dim_ + 1) - el.center(1)) / el.b;
          res = std::abs(std::hypot(u, v) - 1.0);
        }
        if (res > 1e-12) throw std::runtime_error("node violates its chart");
        y(np.y_offset) = std::atan2(v, u);
        break;
      }
    }
  }
  // record fixed coordinates from the given configuration
  const_cast<MeshParametrization*>(this)->x_fixed_ = x;
  return y;
}

// --- mapping evaluation ------------------------------------------------------

std::vector<MappingEval> eval_mapping(const MeshTopology& topo,
                                      const Eigen::VectorXd& x, int elem,
                                      const Eigen::MatrixXd& parent_pts) {
  const ElementTopo& el = topo.elements[elem];
  const int d = topo.dim;
  const NodalBasis& map_basis = basis_cache(el.kind, el.q);
  const Eigen::MatrixXd phi = map_basis.eval(parent_pts);
  const std::vector<Eigen::MatrixXd> dphi = map_basis.grad(parent_pts);
  const int nq = static_cast<int>(parent_pts.rows());
  const int nn = map_basis.size();

  std::vector<MappingEval> out(nq);
  for (int q = 0; q < nq; ++q) {
    MappingEval& me = out[q];
    me.pos = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd jphys = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd jref = Eigen::MatrixXd::Zero(d, d);
    for (int a = 0; a < nn; ++a) {
      const int g = el.nodes[a];
      for (int i = 0; i < d; ++i) {
        me.pos(i) += x(g * d + i) * phi(q, a);
        for (int l = 0; l < d; ++l) {
          jphys(i, l) += x(g * d + i) * dphi[l](q, a);
          jref(i, l) += topo.ref_nodes(g, i) * dphi[l](q, a);
        }
      }
    }
    me.theta = jphys * jref.inverse();
    me.det = me.theta.determinant();
  }
  return out;
}

// --- distortion --------------------------------------------------------------

namespace {

template <class S, int D>
S distortion_integrand(const S* theta) {
  constexpr double eps = 1e-14;
  S det, frob = 0.0;
  if constexpr (D == 1) {
    det = theta[0];
    frob = theta[0] * theta[0];
  } else {
    det = theta[0] * theta[3] - theta[1] * theta[2];
    for (int i = 0; i < 4; ++i) frob += theta[i] * theta[i];
  }
  // smooth positive regularization of det; blows up when det <= 0
  const S det_reg = 0.5 * (det + sqrt(det * det + 4.0 * eps * eps));
  if constexpr (D == 1) {
    const S r = frob / (det_reg * det_reg);
    return r;
  } else {
    const S r = frob / (2.0 * det_reg);
    return r * r;
  }
}

template <int D>
void distortion_impl(const MeshTopology& topo, const Eigen::VectorXd& x,
                     Eigen::VectorXd& r, Eigen::SparseMatrix<double>* drdx) {
  const int ne = topo.nelems();
  r.resize(ne);
  std::vector<Eigen::Triplet<double>> trips;
  for (int e = 0; e < ne; ++e) {
    const ElementTopo& el = topo.elements[e];
    const NodalBasis& mb = basis_cache(el.kind, el.q);
    const QuadratureRule rule = quadrature(el.kind, 2 * el.q + 2);
    const std::vector<Eigen::MatrixXd> dphi = mb.grad(rule.points);
    const int nn = mb.size();
    const int nq = rule.size();

    double num = 0.0, den = 0.0;
    Eigen::VectorXd dnum = Eigen::VectorXd::Zero(nn * D);
    for (int q = 0; q < nq; ++q) {
      Eigen::Matrix<double, D, D> jref = Eigen::Matrix<double, D, D>::Zero();
      Eigen::Matrix<double, D, D> jphys = Eigen::Matrix<double, D, D>::Zero();
      for (int a = 0; a < nn; ++a) {
        const int g = el.nodes[a];
        for (int i = 0; i < D; ++i)
          for (int l = 0; l < D; ++l) {
            jref(i, l) += topo.ref_nodes(g, i) * dphi[l](q, a);
            jphys(i, l) += x(g * D + i) * dphi[l](q, a);
          }
      }
      const double detref = jref.determinant();
      const Eigen::Matrix<double, D, D> jref_inv = jref.inverse();
      const Eigen::Matrix<double, D, D> theta_m = jphys * jref_inv;
      const double wq = rule.weights(q) * detref;
      den += wq;
      if (!drdx) {
        double th[D * D];
        for (int i = 0; i < D; ++i)
          for (int j = 0; j < D; ++j) th[i * D + j] = theta_m(i, j);
        num += wq * distortion_integrand<double, D>(th);
      } else {
        Dual<D * D> th[D * D];
        for (int i = 0; i < D; ++i)
          for (int j = 0; j < D; ++j)
            th[i * D + j] = Dual<D * D>::seed(theta_m(i, j), i * D + j);
        const Dual<D * D> val = distortion_integrand<Dual<D * D>, D>(th);
        num += wq * val.val;
        // dTheta_ij/dx(a,i) = (Jref^{-T} grad_par N_a)_j
        for (int a = 0; a < nn; ++a) {
          Eigen::Matrix<double, D, 1> gpar;
          for (int l = 0; l < D; ++l) gpar(l) = dphi[l](q, a);
          const Eigen::Matrix<double, D, 1> gref =
              jref_inv.transpose() * gpar;
          for (int i = 0; i < D; ++i) {
            double acc = 0.0;
            for (int j = 0; j < D; ++j) acc += val.der[i * D + j] * gref(j);
            dnum(a * D + i) += wq * acc;
          }
        }
      }
    }
    r(e) = num / den;
    if (drdx) {
      for (int a = 0; a < nn; ++a)
        for (int i = 0; i < D; ++i)
          trips.emplace_back(e, el.nodes[a] * D + i, dnum(a * D + i) / den);
    }
  }
  if (drdx) {
    drdx->resize(ne, topo.nx());
    drdx->setFromTriplets(trips.begin(), trips.end());
  }
}

}  // namespace

Eigen::VectorXd mesh_distortion_residual(const MeshTopology& topo,
                                         const Eigen::VectorXd& x) {
  return mesh_distortion_residual(topo, x, nullptr);
}

Eigen::VectorXd mesh_distortion_residual(const MeshTopology& topo,
                                         const Eigen::VectorXd& x,
                                         Eigen::SparseMatrix<double>* drdx) {
  Eigen::VectorXd r;
  if (topo.dim == 1)
    distortion_impl<1>(topo, x, r, drdx);
  else
    distortion_impl<2>(topo, x, r, drdx);
  return r;
}

// --- elasticity --------------------------------------------------------------

Eigen::SparseMatrix<double> assemble_elasticity_stiffness(
    const MeshTopology& topo, const YoungsModulusField& E) {
  const int d = topo.dim;
  const bool nodal = E.nodal.size() > 0;
  if (nodal && E.nodal.size() != topo.nnodes())
    throw std::invalid_argument("Youngs modulus nodal field size mismatch");
  if (!nodal && E.elemental.size() != topo.nelems())
    throw std::invalid_argument("Youngs modulus elemental field size mismatch");
  if (nodal && E.nodal.minCoeff() <= 0.0)
    throw std::invalid_argument("Youngs modulus must be positive");
  if (!nodal && E.elemental.minCoeff() <= 0.0)
    throw std::invalid_argument("Youngs modulus must be positive");

  std::vector<Eigen::Triplet<double>> trips;
  for (int e = 0; e < topo.nelems(); ++e) {
    const ElementTopo& el = topo.elements[e];
    const NodalBasis& mb = basis_cache(el.kind, el.q);
    const QuadratureRule rule = quadrature(el.kind, 2 * el.q);
    const Eigen::MatrixXd phi = mb.eval(rule.points);
    const std::vector<Eigen::MatrixXd> dphi = mb.grad(rule.points);
    const int nn = mb.size();
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nn * d, nn * d);
    for (int q = 0; q < rule.size(); ++q) {
      Eigen::MatrixXd jref = Eigen::MatrixXd::Zero(d, d);
      for (int a = 0; a < nn; ++a)
        for (int i = 0; i < d; ++i)
          for (int l = 0; l < d; ++l)
            jref(i, l) += topo.ref_nodes(el.nodes[a], i) * dphi[l](q, a);
      const double detref = jref.determinant();
      const Eigen::MatrixXd jinv_t = jref.inverse().transpose();
      // reference-coordinate gradients of the mapping shape functions
      Eigen::MatrixXd g(nn, d);
      for (int a = 0; a < nn; ++a) {
        Eigen::VectorXd gp(d);
        for (int l = 0; l < d; ++l) gp(l) = dphi[l](q, a);
        g.row(a) = (jinv_t * gp).transpose();
      }
      double Eq;
      if (nodal) {
        Eq = 0.0;
        for (int a = 0; a < nn; ++a) Eq += E.nodal(el.nodes[a]) * phi(q, a);
      } else {
        Eq = E.elemental(e);
      }
      const double w = rule.weights(q) * detref * Eq;
      // Poisson ratio 0: sigma = E eps, so
      // eps(N_a e_i):eps(N_b e_j) = (delta_ij grad a . grad b + dN_a/dx_j dN_b/dx_i)/2
      for (int a = 0; a < nn; ++a)
        for (int b = 0; b < nn; ++b)
          for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
              const double val =
                  0.5 * ((i == j ? g.row(a).dot(g.row(b)) : 0.0) +
                         g(a, j) * g(b, i));
              K(a * d + i, b * d + j) += w * val;
            }
    }
    for (int a = 0; a < nn; ++a)
      for (int b = 0; b < nn; ++b)
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j)
            trips.emplace_back(el.nodes[a] * d + i, el.nodes[b] * d + j,
                               K(a * d + i, b * d + j));
  }
  Eigen::SparseMatrix<double> K(topo.nx(), topo.nx());
  K.setFromTriplets(trips.begin(), trips.end());
  return K;
}

// --- generators --------------------------------------------------------------

MeshTopology segment_mesh(const std::vector<double>& breakpoints) {
  if (breakpoints.size() < 2)
    throw std::invalid_argument("segment_mesh: need >= 2 breakpoints");
  MeshTopology topo;
  topo.dim = 1;
  const int nn = static_cast<int>(breakpoints.size());
  topo.ref_nodes.resize(nn, 1);
  for (int i = 0; i < nn; ++i) topo.ref_nodes(i, 0) = breakpoints[i];
  for (int e = 0; e + 1 < nn; ++e) {
    ElementTopo el;
    el.kind = ParentKind::Segment;
    el.q = 1;
    el.nodes = {e, e + 1};
    topo.elements.push_back(el);
  }
  topo.build_faces();
  const double a = breakpoints.front(), b = breakpoints.back();
  topo.tag_boundary("left", [a](const Eigen::VectorXd& p) {
    return std::abs(p(0) - a) < 1e-12;
  });
  topo.tag_boundary("right", [b](const Eigen::VectorXd& p) {
    return std::abs(p(0) - b) < 1e-12;
  });
  topo.check_valid();
  return topo;
}

MeshTopology rect_mesh(int nx, int ny, double x0, double x1, double y0,
                       double y1, ParentKind kind, int q) {
  if (q < 1 || q > 2) throw std::invalid_argument("rect_mesh: q must be 1 or 2");
  MeshTopology topo;
  topo.dim = 2;
  const int mx = q * nx, my = q * ny;
  topo.ref_nodes.resize((mx + 1) * (my + 1), 2);
  auto gid = [&](int i, int j) { return j * (mx + 1) + i; };
  for (int j = 0; j <= my; ++j)
    for (int i = 0; i <= mx; ++i) {
      topo.ref_nodes(gid(i, j), 0) = x0 + (x1 - x0) * i / double(mx);
      topo.ref_nodes(gid(i, j), 1) = y0 + (y1 - y0) * j / double(my);
    }
  const Eigen::MatrixXd pts = nodal_points(kind, q);
  for (int cj = 0; cj < ny; ++cj)
    for (int ci = 0; ci < nx; ++ci) {
      if (kind == ParentKind::Quad) {
        ElementTopo el;
        el.kind = kind;
        el.q = q;
        for (int a = 0; a < pts.rows(); ++a) {
          const int i = ci * q + static_cast<int>(std::lround(pts(a, 0) * q));
          const int j = cj * q + static_cast<int>(std::lround(pts(a, 1) * q));
          el.nodes.push_back(gid(i, j));
        }
        topo.elements.push_back(el);
      } else if (kind == ParentKind::Triangle) {
        // split each cell into two triangles along the (ci,cj)-(ci+1,cj+1)
        // diagonal; vertex lists keep counterclockwise orientation
        const int corner[4][2] = {{ci, cj}, {ci + 1, cj}, {ci + 1, cj + 1},
                                  {ci, cj + 1}};
        const int tris[2][3] = {{0, 1, 2}, {0, 2, 3}};
        for (const auto& t : tris) {
          ElementTopo el;
          el.kind = kind;
          el.q = q;
          for (int a = 0; a < pts.rows(); ++a) {
            // barycentric interpolation of the lattice indices
            const double l0 = 1.0 - pts(a, 0) - pts(a, 1);
            const double fi = l0 * corner[t[0]][0] + pts(a, 0) * corner[t[1]][0] +
                              pts(a, 1) * corner[t[2]][0];
            const double fj = l0 * corner[t[0]][1] + pts(a, 0) * corner[t[1]][1] +
                              pts(a, 1) * corner[t[2]][1];
            el.nodes.push_back(gid(static_cast<int>(std::lround(fi * q)),
                                   static_cast<int>(std::lround(fj * q))));
          }
          topo.elements.push_back(el);
        }
      } else {
        throw std::invalid_argument("rect_mesh: kind must be Quad or Triangle");
      }
    }
  topo.build_faces();
  topo.tag_boundary("left", [x0](const Eigen::VectorXd& p) {
    return std::abs(p(0) - x0) < 1e-12;
  });
  topo.tag_boundary("right", [x1](const Eigen::VectorXd& p) {
    return std::abs(p(0) - x1) < 1e-12;
  });
  topo.tag_boundary("bottom", [y0](const Eigen::VectorXd& p) {
    return std::abs(p(1) - y0) < 1e-12;
  });
  topo.tag_boundary("top", [y1](const Eigen::VectorXd& p) {
    return std::abs(p(1) - y1) < 1e-12;
  });
  topo.check_valid();
  return topo;
}

MeshTopology cylinder_omesh(int ntheta, int nr, int q) {
  if (q < 1 || q > 2) throw std::invalid_argument("cylinder_omesh: q in {1,2}");
  MeshTopology topo;
  topo.dim = 2;
  const int mt = q * ntheta, mr = q * nr;
  topo.ref_nodes.resize(mt * (mr + 1), 2);
  auto gid = [&](int i, int j) { return j * mt + (i % mt); };
  for (int j = 0; j <= mr; ++j)
    for (int i = 0; i < mt; ++i) {
      const double th = 2.0 * M_PI * i / double(mt);
      const double t = j / double(mr);
      const Eigen::Vector2d wall(std::cos(th), std::sin(th));
      const Eigen::Vector2d far(6.0 * std::cos(th), 3.0 * std::sin(th));
      topo.ref_nodes.row(gid(i, j)) = ((1.0 - t) * wall + t * far).transpose();
    }
  const Eigen::MatrixXd pts = nodal_points(ParentKind::Quad, q);
  for (int cj = 0; cj < nr; ++cj)
    for (int ci = 0; ci < ntheta; ++ci) {
      ElementTopo el;
      el.kind = ParentKind::Quad;
      el.q = q;
      for (int a = 0; a < pts.rows(); ++a) {
        // parent x runs radially outward, parent y runs with theta
        const int j = cj * q + static_cast<int>(std::lround(pts(a, 0) * q));
        const int i = ci * q + static_cast<int>(std::lround(pts(a, 1) * q));
        el.nodes.push_back(gid(i, j));
      }
      topo.elements.push_back(el);
    }
  topo.build_faces();
  topo.tag_boundary("wall", [](const Eigen::VectorXd& p) {
    return std::abs(p.norm() - 1.0) < 1e-9;
  });
  topo.tag_boundary("inflow", [](const Eigen::VectorXd& p) {
    return p(0) <= 0.5;
  });
  topo.tag_boundary("outflow", [](const Eigen::VectorXd&) { return true; });
  topo.check_valid();
  return topo;
}

// --- text I/O ----------------------------------------------------------------

MeshTopology read_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mesh file: " + path);
  std::string word;
  in >> word;
  if (word != "hoistmesh") throw std::runtime_error("bad mesh header");
  int version;
  in >> version;
  MeshTopology topo;
  in >> word >> topo.dim;
  int nn;
  in >> word >> nn;
  topo.ref_nodes.resize(nn, topo.dim);
  for (int n = 0; n < nn; ++n)
    for (int i = 0; i < topo.dim; ++i) in >> topo.ref_nodes(n, i);
  int ne;
  in >> word >> ne;
  for (int e = 0; e < ne; ++e) {
    ElementTopo el;
    std::string kind;
    in >> kind >> el.q;
    if (kind == "segment")
      el.kind = ParentKind::Segment;
    else if (kind == "triangle")
      el.kind = ParentKind::Triangle;
    else if (kind == "quad")
      el.kind = ParentKind::Quad;
    else
      throw std::runtime_error("unknown element kind: " + kind);
    el.nodes.resize(basis_size(el.kind, el.q) == 0
                        ? 0
                        : nodal_points(el.kind, el.q).rows());
    for (auto& n : el.nodes) in >> n;
    topo.elements.push_back(el);
  }
  topo.build_faces();
  int nb;
  in >> word >> nb;
  for (int b = 0; b < nb; ++b) {
    std::string name;
    int nf;
    in >> name >> nf;
    int tag = -1;
    for (size_t i = 0; i < topo.boundary_names.size(); ++i)
      if (topo.boundary_names[i] == name) tag = static_cast<int>(i);
    if (tag < 0) {
      tag = static_cast<int>(topo.boundary_names.size());
      topo.boundary_names.push_back(name);
    }
    for (int f = 0; f < nf; ++f) {
      int e, lf;
      in >> e >> lf;
      bool found = false;
      for (FaceTopo& ft : topo.faces)
        if (ft.elem[0] == e && ft.local_face[0] == lf && ft.elem[1] < 0) {
          ft.btag = tag;
          found = true;
          break;
        }
      if (!found)
        throw std::runtime_error("boundary face not found in mesh file");
    }
  }
  topo.check_valid();
  return topo;
}

void write_mesh(const MeshTopology& topo, const std::string& path) {
  std::ofstream out(path);
  out.precision(17);
  out << "hoistmesh 1\n";
  out << "dim " << topo.dim << "\n";
  out << "nodes " << topo.nnodes() << "\n";
  for (int n = 0; n < topo.nnodes(); ++n) {
    for (int i = 0; i < topo.dim; ++i)
      out << topo.ref_nodes(n, i) << (i + 1 == topo.dim ? "" : " ");
    out << "\n";
  }
  out << "elements " << topo.nelems() << "\n";
  for (const ElementTopo& el : topo.elements) {
    switch (el.kind) {
      case ParentKind::Segment: out << "segment"; break;
      case ParentKind::Triangle: out << "triangle"; break;
      case ParentKind::Quad: out << "quad"; break;
    }
    out << " " << el.q;
    for (int n : el.nodes) out << " " << n;
    out << "\n";
  }
  std::vector<std::vector<std::pair<int, int>>> per_tag(
      topo.boundary_names.size());
  for (const FaceTopo& ft : topo.faces)
    if (ft.btag >= 0) per_tag[ft.btag].emplace_back(ft.elem[0], ft.local_face[0]);
  out << "boundaries " << per_tag.size() << "\n";
  for (size_t t = 0; t < per_tag.size(); ++t) {
    out << topo.boundary_names[t] << " " << per_tag[t].size() << "\n";
    for (auto [e, f] : per_tag[t]) out << e << " " << f << "\n";
  }
}

MeshTopology elevate_mapping_degree(const MeshTopology& topo,
                                    Eigen::VectorXd& x) {
  for (const ElementTopo& el : topo.elements)
    if (el.q != 1)
      throw std::invalid_argument("elevate_mapping_degree expects q = 1");
  MeshTopology out;
  out.dim = topo.dim;
  out.boundary_names = topo.boundary_names;

  std::vector<Eigen::VectorXd> ref_pts, phys_pts;
  for (int n = 0; n < topo.nnodes(); ++n) {
    ref_pts.push_back(topo.ref_nodes.row(n).transpose());
    phys_pts.push_back(x.segment(n * topo.dim, topo.dim));
  }
  std::map<std::pair<int, int>, int> edge_node;
  auto midpoint = [&](int a, int b) {
    auto key = std::minmax(a, b);
    auto it = edge_node.find(key);
    if (it != edge_node.end()) return it->second;
    const int id = static_cast<int>(ref_pts.size());
    ref_pts.push_back(0.5 * (ref_pts[a] + ref_pts[b]));
    phys_pts.push_back(0.5 * (phys_pts[a] + phys_pts[b]));
    edge_node.emplace(key, id);
    return id;
  };

  for (const ElementTopo& el : topo.elements) {
    ElementTopo ne;
    ne.kind = el.kind;
    ne.q = 2;
    const ParentNodeSets& sets1 = parent_node_sets(el.kind, 1);
    const Eigen::MatrixXd pts2 = nodal_points(el.kind, 2);
    const int nv = parent_nvertices(el.kind);
    std::vector<int> vert(nv);
    for (int v = 0; v < nv; ++v) vert[v] = el.nodes[sets1.vertex_node[v]];
    for (int a = 0; a < pts2.rows(); ++a) {
      // classify the degree-2 nodal point: vertex, edge midpoint, or center
      int matched = -1;
      for (int v = 0; v < nv; ++v) {
        const Eigen::Vector2d vx = parent_vertex(el.kind, v);
        double dist = std::abs(pts2(a, 0) - vx(0));
        if (topo.dim > 1) dist += std::abs(pts2(a, 1) - vx(1));
        if (dist < kNodeTol) {
          matched = vert[v];
          break;
        }
      }
      if (matched < 0) {
        for (int f = 0; f < parent_nfaces(el.kind); ++f) {
          const ParentFace pf = parent_face(el.kind, f);
          const Eigen::Vector2d mid = pf.origin + 0.5 * pf.tangent;
          double dist = std::abs(pts2(a, 0) - mid(0));
          if (topo.dim > 1) dist += std::abs(pts2(a, 1) - mid(1));
          if (dist < kNodeTol) {
            matched = midpoint(vert[pf.vertices[0]], vert[pf.vertices[1]]);
            break;
          }
        }
      }
      if (matched < 0) {
        // interior point (quad center): fresh node from vertex average
        const int id = static_cast<int>(ref_pts.size());
        Eigen::VectorXd rp = Eigen::VectorXd::Zero(topo.dim);
        Eigen::VectorXd pp = Eigen::VectorXd::Zero(topo.dim);
        for (int v = 0; v < nv; ++v) {
          rp += ref_pts[vert[v]];
          pp += phys_pts[vert[v]];
        }
        ref_pts.push_back(rp / nv);
        phys_pts.push_back(pp / nv);
        matched = id;
      }
      ne.nodes.push_back(matched);
    }
    out.elements.push_back(ne);
  }

  out.ref_nodes.resize(static_cast<int>(ref_pts.size()), out.dim);
  x.resize(static_cast<int>(ref_pts.size()) * out.dim);
  for (size_t n = 0; n < ref_pts.size(); ++n) {
    out.ref_nodes.row(n) = ref_pts[n].transpose();
    x.segment(n * out.dim, out.dim) = phys_pts[n];
  }
  out.build_faces();
  // transfer boundary tags by matching vertex keys against the old mesh
  std::map<std::vector<int>, int> old_tags;
  for (const FaceTopo& ft : topo.faces) {
    if (ft.btag < 0) continue;
    std::vector<int> key = topo.face_vertex_nodes(ft.elem[0], ft.local_face[0]);
    std::sort(key.begin(), key.end());
    old_tags.emplace(key, ft.btag);
  }
  for (FaceTopo& ft : out.faces) {
    if (ft.elem[1] >= 0) continue;
    std::vector<int> key = out.face_vertex_nodes(ft.elem[0], ft.local_face[0]);
    std::sort(key.begin(), key.end());
    auto it = old_tags.find(key);
    if (it == old_tags.end())
      throw std::runtime_error("lost boundary tag during degree elevation");
    ft.btag = it->second;
  }
  out.check_valid();
  return out;
}

}  // namespace hoist
