#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "hoist/dual.hpp"

// Conservation-law models and the reference-domain transformation. Fluxes
// are written as pointwise kernels templated on the scalar type so the
// assembly can instantiate them with dual numbers for exact derivatives.
//
// Conventions: state vectors W have length m; gradients Q are m x d,
// row-major per state component (Q[i*d+j] = d W_i / d X_j); fluxes F are
// m x d stored the same way.

namespace hoist {

// Recoverable error: a state left the physical regime (rho or P <= eps).
struct NonphysicalState : std::runtime_error {
  explicit NonphysicalState(const std::string& what)
      : std::runtime_error(what) {}
};

constexpr double kPhysicalEps = 1e-12;

enum class BCKind {
  SupersonicInlet,
  SupersonicOutlet,
  SubsonicInletStagnation,
  SubsonicOutletPressure,
  NoslipIsothermal,
  NoslipAdiabatic,
  Symmetry,
  DirichletState,
  SpaceTimeInitial,
};

// How a boundary face treats the viscous terms of the face integral.
enum class ViscousBC {
  None,       // homogeneous normal viscous flux: drop all viscous face terms
  Dirichlet,  // keep viscous terms with the ghost state
  Adiabatic,  // Dirichlet, but the heat-flux contribution is zeroed
};

// Position-dependent prescribed state for Dirichlet-type boundaries.
struct StateField {
  enum class Profile {
    Constant,
    Sine,        // a + b*sin(c*x)
    SteepeningWave,  // piecewise logistic profile (curved-shock initial data)
    ViscousShock,    // a and b joined by a logistic transition of width c
  };
  Profile profile = Profile::Constant;
  Eigen::VectorXd values;  // Constant: the state vector
  double a = 0, b = 0, c = 0;

  template <class S>
  void eval(const S* pos, S* w) const {
    switch (profile) {
      case Profile::Constant:
        for (int i = 0; i < values.size(); ++i) w[i] = values(i);
        return;
      case Profile::Sine:
        w[0] = a + b * sin(c * pos[0]);
        return;
      case Profile::SteepeningWave: {
        const S shape = -1.0 + 2.0 / (1.0 + exp(5.0 * pos[0]));
        w[0] = pos[0] <= 0.0 ? a * shape : b * (1.0 - pos[0]) * shape;
        return;
      }
      case Profile::ViscousShock:
        w[0] = b + (a - b) / (1.0 + exp(pos[0] / c));
        return;
    }
  }
};

struct BoundaryCondition {
  BCKind kind = BCKind::SupersonicOutlet;
  StateField field;                    // Dirichlet-type data
  double total_pressure = 0.0;         // subsonic inlet
  double total_temperature = 0.0;      // subsonic inlet
  double flow_angle = 0.0;             // subsonic inlet, radians
  double outlet_pressure = 0.0;        // subsonic outlet
  double wall_temperature = 0.0;       // isothermal wall

  ViscousBC viscous() const {
    switch (kind) {
      case BCKind::NoslipIsothermal:
      case BCKind::DirichletState:
      case BCKind::SpaceTimeInitial:
        return ViscousBC::Dirichlet;
      case BCKind::NoslipAdiabatic:
        return ViscousBC::Adiabatic;
      default:
        return ViscousBC::None;
    }
  }
};

// ---------------------------------------------------------------------------
// Models

// Steady viscous Burgers: d/dx(w^2/2) - nu w_xx = S.
struct BurgersSteady {
  static constexpr int dim = 1;
  static constexpr int ncomp = 1;
  double nu = 0.1;
  bool manufactured = false;  // source for U(x) = ms_a + sin(ms_b x)
  double ms_a = 1.5, ms_b = 2.0 * M_PI;

  template <class S>
  void flux_inv(const S* w, S* F) const {
    F[0] = 0.5 * w[0] * w[0];
  }
  template <class S>
  void flux_visc(const S* w, const S* q, double av, S* F) const {
    (void)w;
    F[0] = (nu + av) * q[0];
  }
  static constexpr bool has_source = true;
  template <class S>
  void source(const S* w, const S* q, const S* pos, S* src) const {
    (void)w;
    (void)q;
    if (!manufactured) {
      src[0] = 0.0;
      return;
    }
    const S u = ms_a + sin(ms_b * pos[0]);
    const S du = ms_b * cos(ms_b * pos[0]);
    const S ddu = -ms_b * ms_b * sin(ms_b * pos[0]);
    src[0] = u * du - nu * ddu;
  }
  template <class S>
  S wavespeed(const S* w, const S* n) const {
    return abs(w[0] * n[0]);
  }
  // Scalar Roe dissipation: the mean wave speed recovers the exact upwind
  // flux across a tracked stationary shock.
  template <class S>
  S dissipation_speed(const S* wp, const S* wm, const S* n) const {
    return smooth_abs(0.5 * (wp[0] + wm[0]) * n[0], flux_smooth_eps);
  }
  double flux_smooth_eps = 1e-2;
  static constexpr int npositivity = 0;
  template <class S>
  void positivity(const S*, S*) const {}

  template <class S>
  void ghost(const BoundaryCondition& bc, const S* win, const S* pos,
             const S* n, S* wout) const {
    (void)n;
    switch (bc.kind) {
      case BCKind::SupersonicOutlet:
        wout[0] = win[0];
        return;
      case BCKind::DirichletState:
      case BCKind::SpaceTimeInitial:
        bc.field.eval(pos, wout);
        return;
      default:
        throw std::invalid_argument("unsupported boundary kind for Burgers");
    }
  }
};

// Space-time viscous Burgers with coordinates (x, t):
// F_inv = (w^2/2, w), F_visc = (nu w_x, 0).
struct BurgersSpaceTime {
  static constexpr int dim = 2;
  static constexpr int ncomp = 1;
  double nu = 1e-3;

  template <class S>
  void flux_inv(const S* w, S* F) const {
    F[0] = 0.5 * w[0] * w[0];
    F[1] = w[0];
  }
  template <class S>
  void flux_visc(const S* w, const S* q, double av, S* F) const {
    (void)w;
    F[0] = nu * q[0] + av * q[0];
    F[1] = av * q[1];
  }
  static constexpr bool has_source = false;
  template <class S>
  void source(const S*, const S*, const S*, S* src) const {
    src[0] = 0.0;
  }
  template <class S>
  S wavespeed(const S* w, const S* n) const {
    return abs(w[0] * n[0] + n[1]);
  }
  template <class S>
  S dissipation_speed(const S* wp, const S* wm, const S* n) const {
    return smooth_abs(0.5 * (wp[0] + wm[0]) * n[0] + n[1], flux_smooth_eps);
  }
  double flux_smooth_eps = 1e-2;
  static constexpr int npositivity = 0;
  template <class S>
  void positivity(const S*, S*) const {}

  template <class S>
  void ghost(const BoundaryCondition& bc, const S* win, const S* pos,
             const S* n, S* wout) const {
    (void)n;
    switch (bc.kind) {
      case BCKind::SupersonicOutlet:
        wout[0] = win[0];
        return;
      case BCKind::DirichletState:
      case BCKind::SpaceTimeInitial:
        bc.field.eval(pos, wout);
        return;
      default:
        throw std::invalid_argument("unsupported boundary kind for Burgers");
    }
  }
};

// Compressible Navier-Stokes in 2D, conserved variables (rho, rho v, rho E),
// ideal gas, Newtonian stress, Fourier heat flux, constant viscosity.
struct NavierStokes2D {
  static constexpr int dim = 2;
  static constexpr int ncomp = 4;
  double gamma = 1.4;
  double gas_constant = 1.0 / 1.4;
  double prandtl = 0.72;
  double mu = 1e-3;
  // rho_inf |v_inf| L_ref of the problem nondimensionalization; Reynolds
  // continuation sets mu = mu_reference_speed / Re.
  double mu_reference_speed = 1.0;

  double cp() const { return gamma * gas_constant / (gamma - 1.0); }
  double conductivity() const { return mu * cp() / prandtl; }

  template <class S>
  S pressure(const S* w) const {
    return (gamma - 1.0) * (w[3] - 0.5 * (w[1] * w[1] + w[2] * w[2]) / w[0]);
  }

  void check_physical(const double* w) const {
    if (!(w[0] > kPhysicalEps))
      throw NonphysicalState("nonpositive density");
    const double p = pressure(w);
    if (!(p > kPhysicalEps)) throw NonphysicalState("nonpositive pressure");
  }

  template <class S>
  void flux_inv(const S* w, S* F) const {
    const S vx = w[1] / w[0], vy = w[2] / w[0];
    const S P = pressure(w);
    // column j = flux in direction j; storage F[i*2+j]
    F[0 * 2 + 0] = w[1];
    F[0 * 2 + 1] = w[2];
    F[1 * 2 + 0] = w[1] * vx + P;
    F[1 * 2 + 1] = w[1] * vy;
    F[2 * 2 + 0] = w[2] * vx;
    F[2 * 2 + 1] = w[2] * vy + P;
    F[3 * 2 + 0] = (w[3] + P) * vx;
    F[3 * 2 + 1] = (w[3] + P) * vy;
  }

  // Shear stress and heat flux assembled from conserved-variable gradients;
  // linear in q for fixed w. `zero_heat` drops the Fourier term (adiabatic
  // walls); `av` adds a Laplacian in the conserved variables.
  template <class S>
  void flux_visc_bc(const S* w, const S* q, double av, bool zero_heat,
                    S* F) const {
    const S inv_rho = 1.0 / w[0];
    const S vx = w[1] * inv_rho, vy = w[2] * inv_rho;
    // velocity gradients dv_i/dx_j
    S dv[2][2];
    for (int j = 0; j < 2; ++j) {
      dv[0][j] = (q[1 * 2 + j] - vx * q[0 * 2 + j]) * inv_rho;
      dv[1][j] = (q[2 * 2 + j] - vy * q[0 * 2 + j]) * inv_rho;
    }
    const S divv = dv[0][0] + dv[1][1];
    S tau[2][2];
    tau[0][0] = mu * (2.0 * dv[0][0] - (2.0 / 3.0) * divv);
    tau[1][1] = mu * (2.0 * dv[1][1] - (2.0 / 3.0) * divv);
    tau[0][1] = mu * (dv[0][1] + dv[1][0]);
    tau[1][0] = tau[0][1];
    // temperature gradient from P = (g-1)(rhoE - ke), T = P/(rho R)
    const S P = pressure(w);
    S qheat[2] = {S(0.0), S(0.0)};
    if (!zero_heat) {
      for (int j = 0; j < 2; ++j) {
        const S dke = vx * q[1 * 2 + j] + vy * q[2 * 2 + j] -
                      0.5 * (vx * vx + vy * vy) * q[0 * 2 + j];
        const S dP = (gamma - 1.0) * (q[3 * 2 + j] - dke);
        const S dT = (dP - (P * inv_rho) * q[0 * 2 + j]) * inv_rho /
                     gas_constant;
        qheat[j] = -conductivity() * dT;
      }
    }
    for (int j = 0; j < 2; ++j) {
      F[0 * 2 + j] = av * q[0 * 2 + j];
      F[1 * 2 + j] = tau[0][j] + av * q[1 * 2 + j];
      F[2 * 2 + j] = tau[1][j] + av * q[2 * 2 + j];
      F[3 * 2 + j] = tau[0][j] * vx + tau[1][j] * vy - qheat[j] +
                     av * q[3 * 2 + j];
    }
  }

  template <class S>
  void flux_visc(const S* w, const S* q, double av, S* F) const {
    flux_visc_bc(w, q, av, false, F);
  }

  static constexpr bool has_source = false;
  template <class S>
  void source(const S*, const S*, const S*, S* src) const {
    for (int i = 0; i < 4; ++i) src[i] = 0.0;
  }

  template <class S>
  S wavespeed(const S* w, const S* n) const {
    const S vn = (w[1] * n[0] + w[2] * n[1]) / w[0];
    const S c = sqrt(gamma * pressure(w) / w[0]);
    return abs(vn) + c;
  }
  template <class S>
  S dissipation_speed(const S* wp, const S* wm, const S* n) const {
    auto ws = [&](const S* w) {
      const S vn = (w[1] * n[0] + w[2] * n[1]) / w[0];
      return smooth_abs(vn, flux_smooth_eps) +
             sqrt(gamma * pressure(w) / w[0]);
    };
    return smooth_max(ws(wp), ws(wm), flux_smooth_eps);
  }
  double flux_smooth_eps = 1e-2;

  static constexpr int npositivity = 2;
  template <class S>
  void positivity(const S* w, S* out) const {
    out[0] = w[0];
    out[1] = pressure(w);
  }

  template <class S>
  void ghost(const BoundaryCondition& bc, const S* win, const S* pos,
             const S* n, S* wout) const {
    (void)pos;
    switch (bc.kind) {
      case BCKind::SupersonicInlet:
      case BCKind::DirichletState:
        bc.field.eval(pos, wout);
        return;
      case BCKind::SupersonicOutlet:
        for (int i = 0; i < 4; ++i) wout[i] = win[i];
        return;
      case BCKind::Symmetry: {
        const S vn = win[1] * n[0] + win[2] * n[1];
        wout[0] = win[0];
        wout[1] = win[1] - 2.0 * vn * n[0];
        wout[2] = win[2] - 2.0 * vn * n[1];
        wout[3] = win[3];
        return;
      }
      case BCKind::NoslipIsothermal: {
        const S P = pressure(win);
        const S rho_g = P / (gas_constant * bc.wall_temperature);
        wout[0] = rho_g;
        wout[1] = 0.0;
        wout[2] = 0.0;
        wout[3] = P / (gamma - 1.0);
        return;
      }
      case BCKind::NoslipAdiabatic: {
        const S P = pressure(win);
        wout[0] = win[0];
        wout[1] = 0.0;
        wout[2] = 0.0;
        wout[3] = P / (gamma - 1.0);
        return;
      }
      case BCKind::SubsonicInletStagnation: {
        // prescribed stagnation state + flow direction, speed from interior
        const S speed2 =
            (win[1] * win[1] + win[2] * win[2]) / (win[0] * win[0]);
        S T = bc.total_temperature - 0.5 * speed2 / cp();
        T = max(T, 0.05 * bc.total_temperature);
        const S P = bc.total_pressure *
                    pow(T / bc.total_temperature, gamma / (gamma - 1.0));
        const S rho = P / (gas_constant * T);
        const S speed = sqrt(speed2);
        wout[0] = rho;
        wout[1] = rho * speed * std::cos(bc.flow_angle);
        wout[2] = rho * speed * std::sin(bc.flow_angle);
        wout[3] = P / (gamma - 1.0) + 0.5 * rho * speed2;
        return;
      }
      case BCKind::SubsonicOutletPressure: {
        wout[0] = win[0];
        wout[1] = win[1];
        wout[2] = win[2];
        wout[3] = bc.outlet_pressure / (gamma - 1.0) +
                  0.5 * (win[1] * win[1] + win[2] * win[2]) / win[0];
        return;
      }
      default:
        throw std::invalid_argument(
            "unsupported boundary kind for Navier-Stokes");
    }
  }
};

using ModelVariant =
    std::variant<BurgersSteady, BurgersSpaceTime, NavierStokes2D>;

inline int model_dim(const ModelVariant& m) {
  return std::visit([](const auto& mm) { return mm.dim; }, m);
}
inline int model_ncomp(const ModelVariant& m) {
  return std::visit([](const auto& mm) { return mm.ncomp; }, m);
}

// ---------------------------------------------------------------------------
// Reference-domain transformation, Theta = dG/dX (d x d, row-major).

template <class S, int D>
struct MappingAlgebra {
  S theta[D * D];
  S inv[D * D];
  S det;

  void compute(const S* th) {
    for (int i = 0; i < D * D; ++i) theta[i] = th[i];
    if constexpr (D == 1) {
      det = th[0];
      inv[0] = 1.0 / th[0];
    } else {
      det = th[0] * th[3] - th[1] * th[2];
      const S idet = 1.0 / det;
      inv[0] = th[3] * idet;
      inv[1] = -th[1] * idet;
      inv[2] = -th[2] * idet;
      inv[3] = th[0] * idet;
    }
  }
};

// F_ref = det(Theta) F_phys Theta^{-T}; both m x d row-major.
template <class S, int M, int D>
inline void transform_flux(const MappingAlgebra<S, D>& map, const S* Fphys,
                           S* Fref) {
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < D; ++j) {
      S acc = 0.0;
      for (int k = 0; k < D; ++k)
        acc += Fphys[i * D + k] * map.inv[j * D + k];  // Theta^{-T}_{kj}
      Fref[i * D + j] = map.det * acc;
    }
}

// Q_phys = Q_ref Theta^{-1}.
template <class S, int M, int D>
inline void physical_gradient(const MappingAlgebra<S, D>& map, const S* Qref,
                              S* Qphys) {
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < D; ++j) {
      S acc = 0.0;
      for (int k = 0; k < D; ++k) acc += Qref[i * D + k] * map.inv[k * D + j];
      Qphys[i * D + j] = acc;
    }
}

// Physical co-normal (Nanson vector) det(Theta) Theta^{-T} N and the unit
// physical normal; returns the co-normal magnitude.
template <class S, int D>
inline S conormal(const MappingAlgebra<S, D>& map, const double* N, S* ntil,
                  S* nunit) {
  for (int j = 0; j < D; ++j) {
    S acc = 0.0;
    for (int k = 0; k < D; ++k) acc += map.inv[k * D + j] * N[k];
    ntil[j] = map.det * acc;
  }
  S mag2 = 0.0;
  for (int j = 0; j < D; ++j) mag2 += ntil[j] * ntil[j];
  const S mag = sqrt(mag2);
  for (int j = 0; j < D; ++j) nunit[j] = ntil[j] / mag;
  return mag;
}

// Navier-Stokes helpers used by drivers and tests.
struct NSAux {
  double pressure, temperature, mach, internal_energy;
};

inline NSAux ns_aux(const NavierStokes2D& m, const double* w) {
  if (!(w[0] > kPhysicalEps)) throw NonphysicalState("nonpositive density");
  NSAux a;
  a.pressure = m.pressure(w);
  if (!(a.pressure > kPhysicalEps))
    throw NonphysicalState("nonpositive pressure");
  a.temperature = a.pressure / (w[0] * m.gas_constant);
  a.internal_energy = a.pressure / ((m.gamma - 1.0) * w[0]);
  const double speed = std::hypot(w[1] / w[0], w[2] / w[0]);
  a.mach = speed / std::sqrt(m.gamma * a.pressure / w[0]);
  return a;
}

// Freestream state from Mach number with rho = 1, c = 1 nondimensionalization.
inline Eigen::Vector4d ns_freestream(const NavierStokes2D& m, double mach,
                                     double angle = 0.0) {
  const double rho = 1.0, c = 1.0;
  const double P = rho * c * c / m.gamma;
  const double speed = mach * c;
  Eigen::Vector4d w;
  w(0) = rho;
  w(1) = rho * speed * std::cos(angle);
  w(2) = rho * speed * std::sin(angle);
  w(3) = P / (m.gamma - 1.0) + 0.5 * rho * speed * speed;
  return w;
}

}  // namespace hoist
