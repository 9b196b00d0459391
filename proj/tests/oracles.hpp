#pragma once

// Independent oracles used by the test suites. These intentionally avoid the
// library's derivative formulas: body positions come straight from the
// geometry and every velocity here is a central finite difference, so the
// analytic dynamics can be checked against a second, dumber route.

#include <array>
#include <cmath>
#include <vector>

#include "crrl/plant.hpp"

namespace oracles {

struct BodyPositions {
  double c1x, c1y;    // crank COM
  double c2x, c2y;    // rod COM
  double sx;          // slider (y = 0)
  double rod_angle;   // rod inclination
};

inline BodyPositions body_positions(double psi, const crrl::plant::Params& p) {
  const double ax = p.l1 * std::cos(psi);
  const double ay = p.l1 * std::sin(psi);
  const double x = ax + std::sqrt(p.l2 * p.l2 - ay * ay);
  BodyPositions b;
  b.c1x = p.r1 * std::cos(psi);
  b.c1y = p.r1 * std::sin(psi);
  const double k = p.r2 / p.l2;
  b.c2x = ax + k * (x - ax);
  b.c2y = ay + k * (0.0 - ay);
  b.sx = x;
  b.rod_angle = std::atan2(0.0 - ay, x - ax);
  return b;
}

/// Kinetic energy by per-body 0.5 m v^2 + 0.5 I w^2, velocities from
/// finite-differenced positions.
inline double kinetic_energy_fd(double psi, double omega, const crrl::plant::Params& p,
                                double h = 1e-5) {
  const BodyPositions f = body_positions(psi + h, p);
  const BodyPositions b = body_positions(psi - h, p);
  const double inv2h = 1.0 / (2.0 * h);
  const double v1x = (f.c1x - b.c1x) * inv2h * omega;
  const double v1y = (f.c1y - b.c1y) * inv2h * omega;
  const double v2x = (f.c2x - b.c2x) * inv2h * omega;
  const double v2y = (f.c2y - b.c2y) * inv2h * omega;
  const double vs = (f.sx - b.sx) * inv2h * omega;
  const double w2 = (f.rod_angle - b.rod_angle) * inv2h * omega;
  return 0.5 * p.m1 * (v1x * v1x + v1y * v1y) + 0.5 * p.i1 * omega * omega +
         0.5 * p.m2 * (v2x * v2x + v2y * v2y) + 0.5 * p.i2 * w2 * w2 +
         0.5 * p.m_slider * vs * vs;
}

/// Effective inertia via M = 2 KE(psi, omega=1).
inline double inertia_fd(double psi, const crrl::plant::Params& p) {
  return 2.0 * kinetic_energy_fd(psi, 1.0, p);
}

inline double potential_fd(double psi, const crrl::plant::Params& p) {
  const BodyPositions b = body_positions(psi, p);
  return p.gravity * (p.m1 * b.c1y + p.m2 * b.c2y);
}

/// Fourth-order five-point derivative; the wide step keeps the roundoff of
/// the doubly finite-differenced quantities below the dynamics tolerance.
template <typename F>
double deriv5(F&& f, double x, double h) {
  return (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h);
}

/// Discrete Euler-Lagrange acceleration:
///   a = (u - friction - dU/dpsi - 0.5 dM/dpsi w^2) / M
/// with M and its derivative obtained from the energy oracle alone.
inline double lagrangian_accel_fd(double psi, double omega, double torque,
                                  const crrl::plant::Params& p) {
  const double hm = 1e-2;
  const double m = inertia_fd(psi, p);
  const double dm = deriv5([&](double q) { return inertia_fd(q, p); }, psi, hm);
  const double du = deriv5([&](double q) { return potential_fd(q, p); }, psi, hm);
  const double fric = crrl::plant::friction_torque(omega, p);
  return (torque - fric - du - 0.5 * dm * omega * omega) / m;
}

/// Central-difference derivative of a scalar function.
template <typename F>
double central_diff(F&& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace oracles
