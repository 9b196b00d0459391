#include "crrl/residual.hpp"

#include <algorithm>
#include <stdexcept>

namespace crrl::residual {

void Config::validate() const {
  if (!(beta > 0.0)) throw std::invalid_argument("residual: beta must be > 0");
  if (!(omega_norm > 0.0) || !(torque_norm > 0.0))
    throw std::invalid_argument("residual: normalization constants must be > 0");
}

FeatureVector feature_map(double psi, double omega, double u_base, const Config& cfg) {
  FeatureVector f;
  f.v[0] = omega / cfg.omega_norm;
  f.v[1] = std::sin(psi);
  f.v[2] = std::cos(psi);
  if (!cfg.scale_during_training) {
    f.v[3] = u_base / cfg.torque_norm;
    f.dim = 4;
  }
  return f;
}

double compose_absolute(double u_base, double pi_out, double beta_a) {
  return u_base + beta_a * pi_out;
}

double compose_relative(double u_base, double pi_out, double beta_r) {
  return u_base * (1.0 + beta_r * pi_out);
}

double compose(double u_base, double pi_out, const Config& cfg) {
  return cfg.mode == Mode::Absolute ? compose_absolute(u_base, pi_out, cfg.beta)
                                    : compose_relative(u_base, pi_out, cfg.beta);
}

TubeBounds tube_bounds(double u_base, const Config& cfg) {
  const double half =
      cfg.mode == Mode::Absolute ? cfg.beta : cfg.beta * std::abs(u_base);
  return {u_base - half, u_base + half};
}

double action_scale(double u_base, const Config& cfg) {
  if (!cfg.scale_during_training) return 1.0;
  return cfg.mode == Mode::Absolute ? cfg.beta : cfg.beta * u_base;
}

double training_action(double u_base, double pi_out, const Config& cfg) {
  return action_scale(u_base, cfg) * pi_out;
}

double reconstruct_total(double u_base, double stored_action, const Config& cfg) {
  if (cfg.scale_during_training) return u_base + stored_action;
  return compose(u_base, stored_action, cfg);
}

}  // namespace crrl::residual
