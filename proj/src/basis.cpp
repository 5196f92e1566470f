#include "hoist/basis.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

#include "hoist/quadrature.hpp"

namespace hoist {

double jacobi_poly(double x, double alpha, double beta, int n) {
  const double ab = alpha + beta;
  const double gamma0 = std::pow(2.0, ab + 1.0) / (ab + 1.0) *
                        std::tgamma(alpha + 1.0) * std::tgamma(beta + 1.0) /
                        std::tgamma(ab + 1.0);
  double pl0 = 1.0 / std::sqrt(gamma0);
  if (n == 0) return pl0;
  const double gamma1 =
      (alpha + 1.0) * (beta + 1.0) / (ab + 3.0) * gamma0;
  double pl1 = ((ab + 2.0) * x / 2.0 + (alpha - beta) / 2.0) / std::sqrt(gamma1);
  if (n == 1) return pl1;
  double aold = 2.0 / (2.0 + ab) *
                std::sqrt((alpha + 1.0) * (beta + 1.0) / (ab + 3.0));
  for (int i = 1; i < n; ++i) {
    const double h1 = 2.0 * i + ab;
    const double anew = 2.0 / (h1 + 2.0) *
                        std::sqrt((i + 1.0) * (i + 1.0 + ab) *
                                  (i + 1.0 + alpha) * (i + 1.0 + beta) /
                                  ((h1 + 1.0) * (h1 + 3.0)));
    const double bnew = -(alpha * alpha - beta * beta) / (h1 * (h1 + 2.0));
    const double plnew = ((x - bnew) * pl1 - aold * pl0) / anew;
    pl0 = pl1;
    pl1 = plnew;
    aold = anew;
  }
  return pl1;
}

double jacobi_poly_deriv(double x, double alpha, double beta, int n) {
  if (n == 0) return 0.0;
  return std::sqrt(n * (n + alpha + beta + 1.0)) *
         jacobi_poly(x, alpha + 1.0, beta + 1.0, n - 1);
}

namespace {

// --- modal bases -----------------------------------------------------------
// Segment [0,1]: shifted orthonormal Legendre. Quad: tensor products.
// Triangle: Dubiner basis on the collapsed coordinates.

void tri_collapsed(double x, double y, double& a, double& b) {
  // unit triangle -> (r,s) in [-1,1]^2 with r+s <= 0, then collapse
  const double r = 2.0 * x - 1.0;
  const double s = 2.0 * y - 1.0;
  a = std::abs(s - 1.0) > 1e-14 ? 2.0 * (1.0 + r) / (1.0 - s) - 1.0 : -1.0;
  b = s;
}

double dubiner(double x, double y, int i, int j) {
  double a, b;
  tri_collapsed(x, y, a, b);
  const double h1 = jacobi_poly(a, 0.0, 0.0, i);
  const double h2 = jacobi_poly(b, 2.0 * i + 1.0, 0.0, j);
  return std::sqrt(2.0) * h1 * h2 * std::pow(1.0 - b, i);
}

void dubiner_grad(double x, double y, int i, int j, double& dx, double& dy) {
  double a, b;
  tri_collapsed(x, y, a, b);
  const double fa = jacobi_poly(a, 0.0, 0.0, i);
  const double dfa = jacobi_poly_deriv(a, 0.0, 0.0, i);
  const double gb = jacobi_poly(b, 2.0 * i + 1.0, 0.0, j);
  const double dgb = jacobi_poly_deriv(b, 2.0 * i + 1.0, 0.0, j);
  // derivatives in (r,s) on the [-1,1] triangle (Hesthaven & Warburton)
  double dmodedr = dfa * gb;
  if (i > 0) dmodedr *= std::pow(0.5 * (1.0 - b), i - 1);
  double dmodeds = dfa * (0.5 * (1.0 + a)) * gb;
  if (i > 0) dmodeds *= std::pow(0.5 * (1.0 - b), i - 1);
  double tmp = dgb * std::pow(0.5 * (1.0 - b), i);
  if (i > 0) tmp -= 0.5 * i * gb * std::pow(0.5 * (1.0 - b), i - 1);
  dmodeds += fa * tmp;
  const double scale = std::pow(2.0, i + 0.5);
  dmodedr *= scale;
  dmodeds *= scale;
  // chain rule (r,s) -> (x,y): r = 2x-1, s = 2y-1
  dx = 2.0 * dmodedr;
  dy = 2.0 * dmodeds;
}

double legendre01(double x, int n) {
  return std::sqrt(2.0) * jacobi_poly(2.0 * x - 1.0, 0.0, 0.0, n);
}

double legendre01_deriv(double x, int n) {
  return 2.0 * std::sqrt(2.0) * jacobi_poly_deriv(2.0 * x - 1.0, 0.0, 0.0, n);
}

// --- warp & blend triangle nodes -------------------------------------------

Eigen::VectorXd warp_factor(int n, const Eigen::VectorXd& rout) {
  const Eigen::VectorXd gll01 = gauss_lobatto_points(n + 1);
  Eigen::VectorXd lgl(n + 1), req(n + 1);
  for (int i = 0; i <= n; ++i) {
    lgl(i) = 2.0 * gll01(i) - 1.0;
    req(i) = n == 0 ? 0.0 : -1.0 + 2.0 * i / double(n);
  }
  const int nr = static_cast<int>(rout.size());
  Eigen::VectorXd warp = Eigen::VectorXd::Zero(nr);
  for (int i = 0; i <= n; ++i) {
    // Lagrange basis on the equidistant nodes evaluated at rout
    Eigen::VectorXd l = Eigen::VectorXd::Ones(nr);
    for (int j = 0; j <= n; ++j) {
      if (j == i) continue;
      for (int k = 0; k < nr; ++k)
        l(k) *= (rout(k) - req(j)) / (req(i) - req(j));
    }
    warp += (lgl(i) - req(i)) * l;
  }
  for (int k = 0; k < nr; ++k) {
    const double sf = 1.0 - std::pow(rout(k), 2);
    // zero the warp at the endpoints, scale in between
    warp(k) = std::abs(rout(k)) < 1.0 - 1e-10 ? warp(k) / sf : 0.0;
  }
  return warp;
}

Eigen::MatrixXd triangle_nodes(int n) {
  if (n == 0) {
    Eigen::MatrixXd c(1, 2);
    c << 1.0 / 3.0, 1.0 / 3.0;
    return c;
  }
  constexpr double alpopt[15] = {0.0,    0.0,    1.4152, 0.1001, 0.2751,
                                 0.9800, 1.0999, 1.2832, 1.3648, 1.4773,
                                 1.4959, 1.5743, 1.5770, 1.6223, 1.6258};
  const double alpha = n < 16 ? alpopt[n - 1] : 5.0 / 3.0;
  const int np = (n + 1) * (n + 2) / 2;

  Eigen::VectorXd L1(np), L2(np), L3(np);
  int sk = 0;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n - i; ++j, ++sk) {
      L1(sk) = i / double(n);
      L3(sk) = j / double(n);
      L2(sk) = 1.0 - L1(sk) - L3(sk);
    }
  Eigen::VectorXd x = -L2 + L3, y = (-L2 - L3 + 2.0 * L1) / std::sqrt(3.0);

  const Eigen::VectorXd blend1 = 4.0 * L2.cwiseProduct(L3);
  const Eigen::VectorXd blend2 = 4.0 * L1.cwiseProduct(L3);
  const Eigen::VectorXd blend3 = 4.0 * L1.cwiseProduct(L2);
  const Eigen::VectorXd warpf1 = warp_factor(n, L3 - L2);
  const Eigen::VectorXd warpf2 = warp_factor(n, L1 - L3);
  const Eigen::VectorXd warpf3 = warp_factor(n, L2 - L1);
  for (int k = 0; k < np; ++k) {
    const double w1 =
        blend1(k) * warpf1(k) * (1.0 + std::pow(alpha * L1(k), 2));
    const double w2 =
        blend2(k) * warpf2(k) * (1.0 + std::pow(alpha * L2(k), 2));
    const double w3 =
        blend3(k) * warpf3(k) * (1.0 + std::pow(alpha * L3(k), 2));
    x(k) += w1 + std::cos(2.0 * M_PI / 3.0) * w2 + std::cos(4.0 * M_PI / 3.0) * w3;
    y(k) += std::sin(2.0 * M_PI / 3.0) * w2 + std::sin(4.0 * M_PI / 3.0) * w3;
  }

  // equilateral -> barycentric -> unit triangle
  Eigen::MatrixXd nodes(np, 2);
  for (int k = 0; k < np; ++k) {
    const double l1 = (std::sqrt(3.0) * y(k) + 1.0) / 3.0;
    const double l2 = (-3.0 * x(k) - std::sqrt(3.0) * y(k) + 2.0) / 6.0;
    const double l3 = (3.0 * x(k) - std::sqrt(3.0) * y(k) + 2.0) / 6.0;
    (void)l2;
    nodes(k, 0) = l3;
    nodes(k, 1) = l1;
  }
  return nodes;
}

}  // namespace

Eigen::MatrixXd nodal_points(ParentKind kind, int degree) {
  switch (kind) {
    case ParentKind::Segment: {
      if (degree == 0) {
        Eigen::MatrixXd p(1, 1);
        p << 0.5;
        return p;
      }
      const Eigen::VectorXd g = gauss_lobatto_points(degree + 1);
      Eigen::MatrixXd p(degree + 1, 1);
      p.col(0) = g;
      return p;
    }
    case ParentKind::Triangle:
      return triangle_nodes(degree);
    case ParentKind::Quad: {
      if (degree == 0) {
        Eigen::MatrixXd p(1, 2);
        p << 0.5, 0.5;
        return p;
      }
      const Eigen::VectorXd g = gauss_lobatto_points(degree + 1);
      const int n = degree + 1;
      Eigen::MatrixXd p(n * n, 2);
      int q = 0;
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i, ++q) {
          p(q, 0) = g(i);
          p(q, 1) = g(j);
        }
      return p;
    }
  }
  throw std::logic_error("bad parent kind");
}

NodalBasis::NodalBasis(ParentKind kind, int degree)
    : kind_(kind), degree_(degree), size_(basis_size(kind, degree)),
      nodes_(nodal_points(kind, degree)) {
  const Eigen::MatrixXd V = modal_eval(nodes_);
  vander_t_.compute(V.transpose());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(V);
  vcond_ = svd.singularValues()(0) /
           svd.singularValues()(svd.singularValues().size() - 1);
}

Eigen::MatrixXd NodalBasis::modal_eval(const Eigen::MatrixXd& pts) const {
  const int np = static_cast<int>(pts.rows());
  Eigen::MatrixXd M(np, size_);
  switch (kind_) {
    case ParentKind::Segment:
      for (int n = 0; n <= degree_; ++n)
        for (int q = 0; q < np; ++q) M(q, n) = legendre01(pts(q, 0), n);
      break;
    case ParentKind::Triangle: {
      int c = 0;
      for (int i = 0; i <= degree_; ++i)
        for (int j = 0; j <= degree_ - i; ++j, ++c)
          for (int q = 0; q < np; ++q)
            M(q, c) = dubiner(pts(q, 0), pts(q, 1), i, j);
      break;
    }
    case ParentKind::Quad: {
      int c = 0;
      for (int j = 0; j <= degree_; ++j)
        for (int i = 0; i <= degree_; ++i, ++c)
          for (int q = 0; q < np; ++q)
            M(q, c) = legendre01(pts(q, 0), i) * legendre01(pts(q, 1), j);
      break;
    }
  }
  return M;
}

std::vector<Eigen::MatrixXd> NodalBasis::modal_grad(
    const Eigen::MatrixXd& pts) const {
  const int np = static_cast<int>(pts.rows());
  const int dim = parent_dim(kind_);
  std::vector<Eigen::MatrixXd> G(dim, Eigen::MatrixXd(np, size_));
  switch (kind_) {
    case ParentKind::Segment:
      for (int n = 0; n <= degree_; ++n)
        for (int q = 0; q < np; ++q)
          G[0](q, n) = legendre01_deriv(pts(q, 0), n);
      break;
    case ParentKind::Triangle: {
      int c = 0;
      for (int i = 0; i <= degree_; ++i)
        for (int j = 0; j <= degree_ - i; ++j, ++c)
          for (int q = 0; q < np; ++q) {
            double dx, dy;
            dubiner_grad(pts(q, 0), pts(q, 1), i, j, dx, dy);
            G[0](q, c) = dx;
            G[1](q, c) = dy;
          }
      break;
    }
    case ParentKind::Quad: {
      int c = 0;
      for (int j = 0; j <= degree_; ++j)
        for (int i = 0; i <= degree_; ++i, ++c)
          for (int q = 0; q < np; ++q) {
            G[0](q, c) =
                legendre01_deriv(pts(q, 0), i) * legendre01(pts(q, 1), j);
            G[1](q, c) =
                legendre01(pts(q, 0), i) * legendre01_deriv(pts(q, 1), j);
          }
      break;
    }
  }
  return G;
}

Eigen::MatrixXd NodalBasis::eval(const Eigen::MatrixXd& pts) const {
  // nodal = modal * V^{-1}
  return vander_t_.solve(modal_eval(pts).transpose()).transpose();
}

std::vector<Eigen::MatrixXd> NodalBasis::grad(const Eigen::MatrixXd& pts) const {
  std::vector<Eigen::MatrixXd> G = modal_grad(pts);
  for (auto& g : G) g = vander_t_.solve(g.transpose()).transpose();
  return G;
}

const NodalBasis& basis_cache(ParentKind kind, int degree) {
  static std::map<std::pair<int, int>, std::unique_ptr<NodalBasis>> cache;
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  auto key = std::make_pair(static_cast<int>(kind), degree);
  auto it = cache.find(key);
  if (it == cache.end())
    it = cache.emplace(key, std::make_unique<NodalBasis>(kind, degree)).first;
  return *it->second;
}

}  // namespace hoist
