#pragma once

#include <stdexcept>

namespace crrl::plant {

enum class FrictionModel { Viscous, ViscousPlusCoulomb };

/// Physical parameters of the in-line slider-crank rig.
///
/// The crank (link 1, length l1) rotates about a fixed motor axis; the
/// connecting rod (link 2, length l2) couples the crank pin to a block
/// sliding along the horizontal axis through the crank pivot. r1/r2 are
/// the distances from the driving joint to each link's center of mass.
struct Params {
  double l1 = 0.05;        // crank length [m]
  double l2 = 0.275;       // rod length [m]
  double r1 = 0.33;        // crank COM distance from pivot [m]
  double r2 = 0.1375;      // rod COM distance from crank pin [m]
  double i1 = 0.0038;      // crank inertia about its COM [kg m^2]
  double i2 = 0.002193;    // rod inertia about its COM [kg m^2]
  double m1 = 0.223;       // crank mass [kg]
  double m2 = 0.348;       // rod mass [kg]
  double m_slider = 0.795; // slider mass [kg]
  double c_fric = 0.0047;  // viscous motor friction [N m s/rad]

  double torque_limit = 4.0;  // symmetric input clamp [N m]
  double gravity = 0.0;       // 0 = horizontal rig; >0 puts -y gravity in the linkage plane
  FrictionModel friction = FrictionModel::Viscous;
  double coulomb_torque = 0.0;  // Coulomb magnitude when enabled [N m]

  void validate() const;
};

struct State {
  double psi = 0.0;    // crank angle, unwrapped [rad]
  double omega = 0.0;  // crank angular velocity [rad/s]
  double t = 0.0;      // simulation time [s]
};

struct Kinematics {
  double x;        // slider position [m]
  double dx_dpsi;  // slider velocity per unit crank rate [m/rad]
};

/// Closed-form slider position x(psi) = l1 cos(psi) + sqrt(l2^2 - l1^2 sin^2(psi))
/// and its analytic derivative. Throws std::domain_error when l2 <= l1.
Kinematics slider_kinematics(double psi, const Params& p);

/// Configuration-dependent effective inertia M(psi) >= nu > 0, 2pi-periodic.
double effective_inertia(double psi, const Params& p);

/// Analytic dM/dpsi.
double effective_inertia_dpsi(double psi, const Params& p);

/// Generalized gravity torque dU/dpsi (zero on the default horizontal rig).
double gravity_torque(double psi, const Params& p);

/// Friction torque opposing motion at angular velocity omega.
double friction_torque(double omega, const Params& p);

/// Torque clamped to +-torque_limit; sets *clamped when saturation occurred.
double clamp_torque(double torque, const Params& p, bool* clamped = nullptr);

/// Crank angular acceleration from the scalar manipulator equation
///   M(psi) a = u - friction(omega) - 0.5 M'(psi) omega^2 - g(psi).
/// The input torque is clamped to the limit. Non-finite state is a hard error.
double dynamics(const State& s, double torque, const Params& p);

/// One classical RK4 step with the torque held constant over the step.
State step(const State& s, double torque, double dt, const Params& p);

/// KE = 0.5 M(psi) omega^2.
double kinetic_energy(const State& s, const Params& p);

/// Potential energy of the linkage (zero when gravity is zero).
double potential_energy(const State& s, const Params& p);

}  // namespace crrl::plant
