#include "crrl/plant.hpp"

#include <cmath>

namespace crrl::plant {

namespace {

// Geometry terms at one crank angle: slider position, rod angle and the rod
// COM path, each with first and second derivatives w.r.t. psi. Everything
// downstream (inertia, Coriolis, gravity) is assembled from these.
struct Chain {
  double x, x1, x2;
  double phi1, phi2;
  double p2y;
  double p2x1, p2y1, p2x2, p2y2;
};

Chain chain_at(double psi, const Params& p) {
  const double s = std::sin(psi);
  const double c = std::cos(psi);
  const double l1 = p.l1, l2 = p.l2;
  if (!(l2 > l1)) throw std::domain_error("slider-crank: l2 <= l1 (singular linkage)");
  const double R = std::sqrt(l2 * l2 - l1 * l1 * s * s);

  Chain ch;
  ch.x = l1 * c + R;
  ch.x1 = -l1 * s - l1 * l1 * s * c / R;
  ch.x2 = -l1 * c - l1 * l1 * (c * c - s * s) / R -
          std::pow(l1, 4) * s * s * c * c / (R * R * R);

  // rod angle: sin(phi) = l1 sin(psi) / l2
  ch.phi1 = l1 * c / R;
  ch.phi2 = -l1 * s / R + l1 * l1 * l1 * s * c * c / (R * R * R);

  const double k = p.r2 / l2;
  ch.p2y = (1.0 - k) * l1 * s;
  ch.p2x1 = -(1.0 - k) * l1 * s + k * ch.x1;
  ch.p2y1 = (1.0 - k) * l1 * c;
  ch.p2x2 = -(1.0 - k) * l1 * c + k * ch.x2;
  ch.p2y2 = -(1.0 - k) * l1 * s;
  return ch;
}

}  // namespace

void Params::validate() const {
  if (!(l1 > 0.0)) throw std::invalid_argument("plant: l1 must be > 0");
  if (!(l2 > l1)) throw std::invalid_argument("plant: l2 must exceed l1");
  if (i1 < 0.0 || i2 < 0.0 || m1 < 0.0 || m2 < 0.0 || m_slider < 0.0)
    throw std::invalid_argument("plant: masses and inertias must be >= 0");
  if (!(i1 + m1 * r1 * r1 > 0.0))
    throw std::invalid_argument("plant: crank needs nonzero inertia about the pivot");
  if (c_fric < 0.0) throw std::invalid_argument("plant: c_fric must be >= 0");
  if (!(torque_limit > 0.0)) throw std::invalid_argument("plant: torque_limit must be > 0");
  if (coulomb_torque < 0.0) throw std::invalid_argument("plant: coulomb_torque must be >= 0");
}

Kinematics slider_kinematics(double psi, const Params& p) {
  const Chain ch = chain_at(psi, p);
  return {ch.x, ch.x1};
}

double effective_inertia(double psi, const Params& p) {
  const Chain ch = chain_at(psi, p);
  return p.i1 + p.m1 * p.r1 * p.r1 + p.i2 * ch.phi1 * ch.phi1 +
         p.m2 * (ch.p2x1 * ch.p2x1 + ch.p2y1 * ch.p2y1) +
         p.m_slider * ch.x1 * ch.x1;
}

double effective_inertia_dpsi(double psi, const Params& p) {
  const Chain ch = chain_at(psi, p);
  return 2.0 * p.i2 * ch.phi1 * ch.phi2 +
         2.0 * p.m2 * (ch.p2x1 * ch.p2x2 + ch.p2y1 * ch.p2y2) +
         2.0 * p.m_slider * ch.x1 * ch.x2;
}

double gravity_torque(double psi, const Params& p) {
  if (p.gravity == 0.0) return 0.0;
  const Chain ch = chain_at(psi, p);
  // U = g (m1 r1 sin(psi) + m2 p2y); the slider stays at height 0.
  return p.gravity * (p.m1 * p.r1 * std::cos(psi) + p.m2 * ch.p2y1);
}

double friction_torque(double omega, const Params& p) {
  double f = p.c_fric * omega;
  if (p.friction == FrictionModel::ViscousPlusCoulomb)
    f += p.coulomb_torque * std::tanh(omega / 1e-2);  // smoothed sign for the integrator
  return f;
}

double clamp_torque(double torque, const Params& p, bool* clamped) {
  if (torque > p.torque_limit) {
    if (clamped) *clamped = true;
    return p.torque_limit;
  }
  if (torque < -p.torque_limit) {
    if (clamped) *clamped = true;
    return -p.torque_limit;
  }
  if (clamped) *clamped = false;
  return torque;
}

double dynamics(const State& s, double torque, const Params& p) {
  if (!std::isfinite(s.psi) || !std::isfinite(s.omega))
    throw std::runtime_error("plant: non-finite state (simulation corrupted)");
  const double u = clamp_torque(torque, p);
  const double m = effective_inertia(s.psi, p);
  const double dm = effective_inertia_dpsi(s.psi, p);
  return (u - friction_torque(s.omega, p) - 0.5 * dm * s.omega * s.omega -
          gravity_torque(s.psi, p)) / m;
}

State step(const State& s, double torque, double dt, const Params& p) {
  if (!(dt > 0.0)) throw std::invalid_argument("plant: dt must be > 0");
  const auto accel = [&](double psi, double omega) {
    State tmp{psi, omega, s.t};
    return dynamics(tmp, torque, p);
  };
  const double k1p = s.omega;
  const double k1w = accel(s.psi, s.omega);
  const double k2p = s.omega + 0.5 * dt * k1w;
  const double k2w = accel(s.psi + 0.5 * dt * k1p, s.omega + 0.5 * dt * k1w);
  const double k3p = s.omega + 0.5 * dt * k2w;
  const double k3w = accel(s.psi + 0.5 * dt * k2p, s.omega + 0.5 * dt * k2w);
  const double k4p = s.omega + dt * k3w;
  const double k4w = accel(s.psi + dt * k3p, s.omega + dt * k3w);
  State out;
  out.psi = s.psi + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
  out.omega = s.omega + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
  out.t = s.t + dt;
  return out;
}

double kinetic_energy(const State& s, const Params& p) {
  return 0.5 * effective_inertia(s.psi, p) * s.omega * s.omega;
}

double potential_energy(const State& s, const Params& p) {
  if (p.gravity == 0.0) return 0.0;
  const Chain ch = chain_at(s.psi, p);
  return p.gravity * (p.m1 * p.r1 * std::sin(s.psi) + p.m2 * ch.p2y);
}

}  // namespace crrl::plant
