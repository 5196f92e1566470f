#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "hoist/basis.hpp"
#include "hoist/element.hpp"

namespace hoist {

struct InvertedMapping : std::runtime_error {
  explicit InvertedMapping(const std::string& what)
      : std::runtime_error(what) {}
};

struct ElementTopo {
  ParentKind kind;
  int q = 1;                // geometric (mapping) degree
  std::vector<int> nodes;   // mapping node ids, nodal_points(kind,q) order
};

struct FaceTopo {
  int elem[2] = {-1, -1};        // right element -1 on boundary faces
  int local_face[2] = {-1, -1};
  int btag = -1;                 // boundary tag id, -1 for interior
  bool reversed = false;         // side-1 runs s -> 1-s relative to side 0
};

// Node indices of nodal_points(kind,q) on vertices and faces.
struct ParentNodeSets {
  std::vector<int> vertex_node;
  std::vector<std::vector<int>> face_nodes;
};
const ParentNodeSets& parent_node_sets(ParentKind kind, int q);

struct MeshTopology {
  int dim = 1;
  Eigen::MatrixXd ref_nodes;  // nnodes x dim, reference configuration
  std::vector<ElementTopo> elements;
  std::vector<FaceTopo> faces;
  std::vector<std::string> boundary_names;

  int nnodes() const { return static_cast<int>(ref_nodes.rows()); }
  int nelems() const { return static_cast<int>(elements.size()); }
  int nx() const { return nnodes() * dim; }

  int boundary_tag(const std::string& name) const;
  // Vertex node ids (global) of a local face of an element.
  std::vector<int> face_vertex_nodes(int e, int f) const;

  // Pair element faces, detect boundary faces, set orientation flags.
  // Boundary tags are assigned afterwards via tag_boundary.
  void build_faces();
  // Tag all untagged boundary faces whose nodes all satisfy `pred`.
  void tag_boundary(const std::string& name,
                    const std::function<bool(const Eigen::VectorXd&)>& pred);
  void check_valid() const;

  Eigen::VectorXd flat_ref_coords() const;
};

// --- charts and the mesh parametrization -----------------------------------

struct ChartPlane {
  Eigen::VectorXd point, normal;  // normal unit length
};
struct ChartCircle {
  Eigen::Vector2d center;
  double radius;
};
struct ChartEllipse {
  Eigen::Vector2d center;
  double a, b;
};
struct ChartFixed {};
using Chart = std::variant<ChartPlane, ChartCircle, ChartEllipse, ChartFixed>;

enum class NodeDofKind { Fixed, Interior, Planar, Angular };

struct NodeParam {
  NodeDofKind kind = NodeDofKind::Interior;
  int y_offset = -1;     // first y dof, -1 if none
  int chart = -1;        // chart index for Planar/Angular
  Eigen::VectorXd tangent;  // Planar: in-plane direction (2D)
};

// x = phi(y): interior nodes carry their coordinates, boundary nodes move
// within their chart, feature nodes (on two differently-tagged boundaries)
// are fixed.
class MeshParametrization {
 public:
  MeshParametrization() = default;
  MeshParametrization(const MeshTopology& topo,
                      const std::map<std::string, Chart>& tag_charts,
                      const Eigen::VectorXd& x0, bool freeze_all = false);

  int ny() const { return ny_; }
  const std::vector<NodeParam>& node_params() const { return node_params_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& y) const;
  Eigen::SparseMatrix<double> jacobian(const Eigen::VectorXd& y) const;
  // y reproducing given coordinates; throws if chart residual > 1e-12.
  Eigen::VectorXd init_y(const Eigen::VectorXd& x) const;

 private:
  int dim_ = 0, ny_ = 0;
  std::vector<NodeParam> node_params_;
  std::vector<Chart> charts_;
  Eigen::VectorXd x_fixed_;  // coordinates of nodes without dofs
};

// --- mapping evaluation ------------------------------------------------------

struct MappingEval {
  Eigen::VectorXd pos;     // physical position
  Eigen::MatrixXd theta;   // deformation gradient w.r.t. reference config
  double det = 0.0;
  Eigen::VectorXd normal;  // unit face normal (face queries only)
  double sjac = 0.0;       // reference surface Jacobian
};

// Evaluate the mapping at parent-domain points of one element.
std::vector<MappingEval> eval_mapping(const MeshTopology& topo,
                                      const Eigen::VectorXd& x, int elem,
                                      const Eigen::MatrixXd& parent_pts);

// Face normal/surface-Jacobian of the reference configuration at face
// quadrature points (side 0 of the face).
struct FaceGeometry {
  Eigen::MatrixXd normals;  // nq x d, outward from side 0
  Eigen::VectorXd sjac;     // reference surface Jacobian at quad points
};

// --- mesh distortion ---------------------------------------------------------

// Elemental distortion: quadrature average of
// (||Theta||_F^2 / (d det_eps(Theta)^{2/d}))^d, normalized to 1 on the
// reference configuration; det_eps regularizes nonpositive Jacobians so the
// value blows up smoothly on inversion.
Eigen::VectorXd mesh_distortion_residual(const MeshTopology& topo,
                                         const Eigen::VectorXd& x);
// Same plus sparse derivative w.r.t. x.
Eigen::VectorXd mesh_distortion_residual(const MeshTopology& topo,
                                         const Eigen::VectorXd& x,
                                         Eigen::SparseMatrix<double>* drdx);

// --- linear elasticity stiffness (regularization matrix) --------------------

// Nodal field: one value per mesh node (piecewise q-linear via the mapping
// basis) or one value per element (piecewise constant).
struct YoungsModulusField {
  Eigen::VectorXd nodal;      // size nnodes, or
  Eigen::VectorXd elemental;  // size nelems (used when nodal empty)
};

// CG linear-elasticity stiffness on the reference configuration with
// Poisson ratio 0; symmetric positive semidefinite on the x dofs.
Eigen::SparseMatrix<double> assemble_elasticity_stiffness(
    const MeshTopology& topo, const YoungsModulusField& E);

// --- generators, I/O, degree elevation ---------------------------------------

MeshTopology segment_mesh(const std::vector<double>& breakpoints);
MeshTopology rect_mesh(int nx, int ny, double x0, double x1, double y0,
                       double y1, ParentKind kind, int q);
// O-mesh between the unit circle and the ellipse (x/6)^2 + (y/3)^2 = 1.
MeshTopology cylinder_omesh(int ntheta, int nr, int q);

MeshTopology read_mesh(const std::string& path);
void write_mesh(const MeshTopology& topo, const std::string& path);

// Move boundary faces of `old_name` whose nodes all satisfy `pred` to a new
// tag `new_name`.
void split_boundary_tag(MeshTopology& topo, const std::string& old_name,
                        const std::string& new_name,
                        const std::function<bool(const Eigen::VectorXd&)>& pred);

// Raise the mapping degree of every element to q = 2 (node re-interpolation
// of the current mapping); returns new physical coordinates through `x`.
MeshTopology elevate_mapping_degree(const MeshTopology& topo,
                                    Eigen::VectorXd& x);

}  // namespace hoist
