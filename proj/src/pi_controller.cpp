#include "crrl/pi_controller.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace crrl::control {

void PIGains::validate() const {
  if (kp < 0.0 || ki < 0.0) throw std::invalid_argument("pi: gains must be >= 0");
  if (kp == 0.0 && ki == 0.0) throw std::invalid_argument("pi: kp and ki cannot both be 0");
}

double reference_value(const Reference& ref, double psi) {
  switch (ref.kind) {
    case Reference::Kind::Constant:
      return rpm_to_rad_s(ref.rpm);
    case Reference::Kind::SineOfAngle:
      return rpm_to_rad_s(ref.amplitude_rpm * std::sin(psi) + ref.offset_rpm);
  }
  throw std::logic_error("unreachable");
}

double reference_max(const Reference& ref) {
  switch (ref.kind) {
    case Reference::Kind::Constant:
      return std::abs(rpm_to_rad_s(ref.rpm));
    case Reference::Kind::SineOfAngle:
      return std::abs(rpm_to_rad_s(std::abs(ref.offset_rpm) + std::abs(ref.amplitude_rpm)));
  }
  throw std::logic_error("unreachable");
}

std::pair<double, ControllerState> pi_action(ControllerState cs, double omega_d,
                                             double omega, const PIGains& gains,
                                             double dt, double windup_limit) {
  if (!(dt > 0.0)) throw std::invalid_argument("pi: dt must be > 0");
  const double e = omega_d - omega;
  cs.e_int = std::clamp(cs.e_int + e * dt, -windup_limit, windup_limit);
  cs.u_last = gains.kp * e + gains.ki * cs.e_int;
  return {cs.u_last, cs};
}

std::vector<PIGains> GridSpec::points() const {
  std::vector<PIGains> pts;
  const int nkp = static_cast<int>(std::floor((kp_max - kp_min) / kp_step + 0.5)) + 1;
  const int nki = static_cast<int>(std::floor((ki_max - ki_min) / ki_step + 0.5)) + 1;
  for (int i = 0; i < nkp; ++i)
    for (int j = 0; j < nki; ++j)
      pts.push_back({kp_min + i * kp_step, ki_min + j * ki_step});
  return pts;
}

TuneResult grid_search_tune(const std::function<TuneOutcome(const PIGains&)>& evaluate,
                            const GridSpec& grid) {
  const auto pts = grid.points();
  if (pts.empty()) throw std::invalid_argument("tune: empty grid");

  TuneResult res;
  res.best_mae = std::numeric_limits<double>::infinity();
  bool have_best = false;
  for (const auto& g : pts) {
    TuneOutcome out;
    try {
      out = evaluate(g);
      if (!std::isfinite(out.mae)) out.stable = false;
    } catch (const std::exception&) {
      out.stable = false;
    }
    const double mae = out.stable ? out.mae : std::numeric_limits<double>::infinity();
    res.table.push_back({g.kp, g.ki, mae, out.stable});
    const bool better =
        !have_best || mae < res.best_mae ||
        (mae == res.best_mae &&
         (g.kp < res.best.kp || (g.kp == res.best.kp && g.ki < res.best.ki)));
    if (better) {
      res.best = g;
      res.best_mae = mae;
      have_best = true;
    }
  }
  return res;
}

}  // namespace crrl::control
