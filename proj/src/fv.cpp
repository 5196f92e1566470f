#include "hoist/fv.hpp"

#include <cmath>
#include <stdexcept>

namespace hoist {

namespace {

double burgers_flux(double u) { return 0.5 * u * u; }

// exact Riemann flux for Burgers
double godunov_flux(double ul, double ur) {
  if (ul > ur) {
    const double s = 0.5 * (ul + ur);  // shock speed
    return s > 0.0 ? burgers_flux(ul) : burgers_flux(ur);
  }
  if (ul > 0.0) return burgers_flux(ul);
  if (ur < 0.0) return burgers_flux(ur);
  return 0.0;  // sonic rarefaction
}

double superbee(double r) {
  return std::max({0.0, std::min(2.0 * r, 1.0), std::min(r, 2.0)});
}

}  // namespace

BurgersFV::BurgersFV(const FVConfig& config,
                     const std::function<double(double)>& initial)
    : cfg_(config) {
  if (cfg_.cells < 3) throw std::invalid_argument("BurgersFV: cells < 3");
  dx_ = (cfg_.x1 - cfg_.x0) / cfg_.cells;
  u_.resize(cfg_.cells);
  for (int i = 0; i < cfg_.cells; ++i)
    u_(i) = initial(cfg_.x0 + (i + 0.5) * dx_);
  snap_times_ = {0.0};
  snaps_ = {u_};
}

Eigen::VectorXd BurgersFV::rhs(const Eigen::VectorXd& u) const {
  const int n = cfg_.cells;
  // two ghost cells per side holding the boundary value
  Eigen::VectorXd ue(n + 4);
  ue.segment(2, n) = u;
  ue(0) = ue(1) = cfg_.left_value;
  ue(n + 2) = ue(n + 3) = cfg_.right_value;

  // limited slopes
  Eigen::VectorXd slope = Eigen::VectorXd::Zero(n + 4);
  if (cfg_.order == 2) {
    for (int i = 1; i < n + 3; ++i) {
      const double dl = ue(i) - ue(i - 1);
      const double dr = ue(i + 1) - ue(i);
      if (dr != 0.0)
        slope(i) = superbee(dl / dr) * dr;
      else
        slope(i) = 0.0;
    }
  }

  Eigen::VectorXd flux(n + 1);  // interface i+1/2 of interior numbering
  for (int f = 0; f <= n; ++f) {
    const int i = f + 1;  // left cell in extended numbering
    const double ul = ue(i) + 0.5 * slope(i);
    const double ur = ue(i + 1) - 0.5 * slope(i + 1);
    double fl = godunov_flux(ul, ur);
    // central viscous flux
    fl -= cfg_.nu * (ue(i + 1) - ue(i)) / dx_;
    flux(f) = fl;
  }
  Eigen::VectorXd du(n);
  for (int i = 0; i < n; ++i) du(i) = -(flux(i + 1) - flux(i)) / dx_;
  return du;
}

void BurgersFV::run(double t_end, double dt, int store_every) {
  const int nsteps = static_cast<int>(std::round(t_end / dt));
  if (std::abs(nsteps * dt - t_end) > 1e-10 * std::max(1.0, t_end))
    throw std::invalid_argument("BurgersFV: t_end must be a multiple of dt");
  double t = 0.0;
  for (int s = 0; s < nsteps; ++s) {
    const double cfl = u_.cwiseAbs().maxCoeff() * dt / dx_;
    const double dfl = 2.0 * cfg_.nu * dt / (dx_ * dx_);
    if (cfl > 1.0 || dfl > 1.0 || !u_.allFinite())
      throw std::runtime_error("BurgersFV: CFL violation or blowup");
    const Eigen::VectorXd k1 = rhs(u_);
    const Eigen::VectorXd k2 = rhs(u_ + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = rhs(u_ + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = rhs(u_ + dt * k3);
    u_ += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t += dt;
    if ((s + 1) % store_every == 0 || s + 1 == nsteps) {
      snap_times_.push_back(t);
      snaps_.push_back(u_);
    }
  }
}

double BurgersFV::run_steady(double tol, int max_steps) {
  double resid = 1e300;
  for (int s = 0; s < max_steps; ++s) {
    const double dt = 0.4 * dx_ /
                      std::max(u_.cwiseAbs().maxCoeff() + 1e-12,
                               2.0 * cfg_.nu / dx_);
    const Eigen::VectorXd k1 = rhs(u_);
    const Eigen::VectorXd k2 = rhs(u_ + 0.5 * dt * k1);
    u_ += dt * k2;
    resid = k2.cwiseAbs().maxCoeff();
    if (!u_.allFinite()) throw std::runtime_error("BurgersFV: blowup");
    if (resid < tol) break;
  }
  snap_times_ = {0.0};
  snaps_ = {u_};
  return resid;
}

double BurgersFV::sample(double x) const {
  int i = static_cast<int>(std::floor((x - cfg_.x0) / dx_));
  i = std::max(0, std::min(cfg_.cells - 1, i));
  return u_(i);
}

double BurgersFV::sample(double x, double t) const {
  int i = static_cast<int>(std::floor((x - cfg_.x0) / dx_));
  i = std::max(0, std::min(cfg_.cells - 1, i));
  if (snap_times_.size() == 1 || t <= snap_times_.front())
    return snaps_.front()(i);
  if (t >= snap_times_.back()) return snaps_.back()(i);
  const auto it = std::lower_bound(snap_times_.begin(), snap_times_.end(), t);
  const size_t hi = static_cast<size_t>(it - snap_times_.begin());
  const size_t lo = hi - 1;
  const double w =
      (t - snap_times_[lo]) / (snap_times_[hi] - snap_times_[lo]);
  return (1.0 - w) * snaps_[lo](i) + w * snaps_[hi](i);
}

}  // namespace hoist
