#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

namespace crrl::control {

struct PIGains {
  double kp = 1.4;  // [N m s/rad] on the velocity error
  double ki = 0.1;  // [N m/rad] on the integrated velocity error

  void validate() const;
};

struct ControllerState {
  double e_int = 0.0;   // integrated velocity error [rad]
  double u_last = 0.0;  // last commanded torque [N m]
};

/// Angular-velocity reference, either a constant or a sine in the crank angle.
struct Reference {
  enum class Kind { Constant, SineOfAngle };
  Kind kind = Kind::Constant;
  double rpm = 60.0;            // Constant
  double amplitude_rpm = 15.0;  // SineOfAngle
  double offset_rpm = 60.0;     // SineOfAngle
};

constexpr double rpm_to_rad_s(double rpm) { return rpm * M_PI / 30.0; }

/// Desired angular velocity omega_d(psi) in rad/s.
double reference_value(const Reference& ref, double psi);

/// sup over psi of |omega_d|, used for feature normalization and omega0 bounds.
double reference_max(const Reference& ref);

/// One PI step on the velocity error. The integral is updated first (with a
/// symmetric anti-windup clamp), then u = kp e + ki e_int.
std::pair<double, ControllerState> pi_action(ControllerState cs, double omega_d,
                                             double omega, const PIGains& gains,
                                             double dt, double windup_limit = 10.0);

struct GridSpec {
  double kp_min = 0.1, kp_max = 2.6, kp_step = 0.1;
  double ki_min = 0.1, ki_max = 1.2, ki_step = 0.1;

  std::vector<PIGains> points() const;
};

struct TuneOutcome {
  double mae = 0.0;
  bool stable = true;
};

struct TunePoint {
  double kp, ki, mae;
  bool stable;
};

struct TuneResult {
  PIGains best;
  double best_mae;
  std::vector<TunePoint> table;
};

/// Exhaustive sweep over the gain grid. `evaluate` runs the closed loop for
/// one candidate and reports its MAE; unstable candidates are recorded with
/// MAE = +inf and never abort the sweep. Ties break toward smaller kp, then
/// smaller ki, so the result does not depend on enumeration order.
TuneResult grid_search_tune(const std::function<TuneOutcome(const PIGains&)>& evaluate,
                            const GridSpec& grid);

}  // namespace crrl::control
