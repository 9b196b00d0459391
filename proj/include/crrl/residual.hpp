#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>

namespace crrl::residual {

enum class Mode { Absolute, Relative };

/// Tube configuration. `beta` is a torque [N m] in Absolute mode and a
/// dimensionless fraction of the base output in Relative mode.
struct Config {
  Mode mode = Mode::Relative;
  double beta = 0.2;
  bool scale_during_training = true;

  // Fixed normalization constants for the feature map.
  double omega_norm = 4.0 * M_PI;  // 2 * max reference speed
  double torque_norm = 4.0;        // torque limit

  void validate() const;
};

/// Observation handed to the agent: normalized speed plus the angle encoded
/// as (sin, cos). When the stored action is the raw network output (the
/// unscaled training variant) the base controller output is appended so the
/// networks keep full state information.
struct FeatureVector {
  std::array<double, 4> v{};
  int dim = 3;

  double omega() const { return v[0]; }
  double sin_psi() const { return v[1]; }
  double cos_psi() const { return v[2]; }
  bool has_u_base() const { return dim == 4; }
  double u_base() const { return v[3]; }
  std::span<const double> values() const { return {v.data(), static_cast<size_t>(dim)}; }
};

FeatureVector feature_map(double psi, double omega, double u_base, const Config& cfg);

/// u = u_base + beta_a * pi_out, |pi_out| <= 1.
double compose_absolute(double u_base, double pi_out, double beta_a);

/// u = u_base * (1 + beta_r * pi_out); exactly zero whenever u_base is zero.
double compose_relative(double u_base, double pi_out, double beta_r);

double compose(double u_base, double pi_out, const Config& cfg);

/// Admissible band around the base output, lo <= u_total <= hi (pre-clamp).
struct TubeBounds {
  double lo, hi;
};
TubeBounds tube_bounds(double u_base, const Config& cfg);

/// Action value written to the replay buffer. In scaled mode this is the
/// residual torque itself (beta * u_base * pi_out relative, beta * pi_out
/// absolute); otherwise the raw pi_out.
double training_action(double u_base, double pi_out, const Config& cfg);

/// Multiplier such that training_action = scale * pi_out for the current
/// state; carried per transition so fresh actor samples can be mapped into
/// the stored-action space during updates.
double action_scale(double u_base, const Config& cfg);

/// Inverse of training_action composed with the tube: recovers u_total from
/// the stored action and the base output.
double reconstruct_total(double u_base, double stored_action, const Config& cfg);

}  // namespace crrl::residual
