#include "crrl/stability.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crrl::stability {

namespace {

struct Eig2 {
  double lo, hi;
};

// Eigenvalues of the symmetric 2x2 [[a, b], [b, d]].
Eig2 sym22_eigs(double a, double b, double d) {
  const double mean = 0.5 * (a + d);
  const double rad = std::sqrt(0.25 * (a - d) * (a - d) + b * b);
  return {mean - rad, mean + rad};
}

// P(q) = [[lambda ki, kp/2], [kp/2, lambda M(q)]]. Both eigenvalues are
// non-decreasing in M, so their extremes over the inertia range sit at
// nu_M and mu_M and no grid pass is needed here.
double p_min_eig(double kp, double ki, double lambda, double m) {
  return sym22_eigs(lambda * ki, 0.5 * kp, lambda * m).lo;
}
double p_max_eig(double kp, double ki, double lambda, double m) {
  return sym22_eigs(lambda * ki, 0.5 * kp, lambda * m).hi;
}

double disturbance_gain(double kp, double lambda, const SystemNorms& n) {
  return std::sqrt(0.25 * kp * kp + lambda * lambda * n.mu_M * n.mu_M);
}

CertificateReport check_impl(const CertificateInput& in, bool relative) {
  const SystemNorms& n = in.norms;
  if (!(n.nu_M > 0) || n.mu_M < n.nu_M)
    throw std::invalid_argument("certificate: invalid inertia norms");
  const double inf = std::numeric_limits<double>::infinity();
  const double beta_r = relative ? in.beta : 0.0;

  CertificateReport rep;

  // lambda > kp^2 / (2 (1 - 2 beta_r) ki nu(M))
  rep.lambda_ok.value = in.lambda;
  if (beta_r >= 0.5) {
    rep.lambda_ok.satisfiable = false;
    rep.lambda_ok.threshold = inf;
  } else {
    rep.lambda_ok.threshold =
        in.kp * in.kp / (2.0 * (1.0 - 2.0 * beta_r) * in.ki * n.nu_M);
    rep.lambda_ok.ok = in.lambda > rep.lambda_ok.threshold;
  }

  const double nu_P = p_min_eig(in.kp, in.ki, in.lambda, n.nu_M);
  const double mu_P = p_max_eig(in.kp, in.ki, in.lambda, n.mu_M);
  rep.alpha1 = nu_P;
  rep.alpha2 = mu_P;
  rep.p_positive_definite = nu_P > 0;

  // kp > 2 mu(Lq) omega0 / (1 - 1/lambda - 2 beta_r ki/lambda - sqrt(eps^2 mu(P) mu(B) / (lambda^2 nu(P) nu(M))))
  rep.kp_ok.value = in.kp;
  if (in.lambda <= 1.0 || nu_P <= 0.0) {
    rep.kp_ok.satisfiable = false;
    rep.kp_ok.threshold = inf;
  } else {
    const double root = std::sqrt(n.epsilon * n.epsilon * mu_P * n.mu_B /
                                  (in.lambda * in.lambda * nu_P * n.nu_M));
    const double denom =
        1.0 - 1.0 / in.lambda - 2.0 * beta_r * in.ki / in.lambda - root;
    if (denom <= 0.0) {
      rep.kp_ok.satisfiable = false;
      rep.kp_ok.threshold = inf;
    } else {
      rep.kp_ok.threshold = 2.0 * n.mu_Lq * in.omega0 / denom;
      rep.kp_ok.ok = in.kp > rep.kp_ok.threshold;
    }
  }

  // ki > mu(M) mu(B)^2 omega0^2 / (2 (1 - beta_r) nu(M)^2)
  rep.ki_ok.value = in.ki;
  if (beta_r >= 1.0) {
    rep.ki_ok.satisfiable = false;
    rep.ki_ok.threshold = inf;
  } else {
    rep.ki_ok.threshold = n.mu_M * n.mu_B * n.mu_B * in.omega0 * in.omega0 /
                          (2.0 * (1.0 - beta_r) * n.nu_M * n.nu_M);
    rep.ki_ok.ok = in.ki > rep.ki_ok.threshold;
  }

  // Q-check matrix (constant): (kp / 2 mu(M)) [[nu(M) ki / 2 mu(M), kp/2], [kp/2, (lambda-1) nu(M)]]
  const double qs = in.kp / (2.0 * n.mu_M);
  const Eig2 qe = sym22_eigs(qs * n.nu_M * in.ki / (2.0 * n.mu_M), qs * 0.5 * in.kp,
                             qs * (in.lambda - 1.0) * n.nu_M);
  rep.alpha3 = qe.lo;
  rep.q_positive_definite = qe.lo > 0;

  // |grad V . d| <= alpha4 ||x||; the fixed-width tube adds beta_a to the
  // bounded-disturbance numerator, the proportional tube does not.
  const double beta_a = relative ? 0.0 : in.beta;
  rep.alpha4 = disturbance_gain(in.kp, in.lambda, n) *
               (in.alpha0 + (n.mu_B * in.omega0 + n.g0 + beta_a) / n.nu_M);

  if (rep.alpha1 > 0 && rep.alpha3 > 0)
    rep.delta = rep.alpha2 * rep.alpha4 / (rep.alpha1 * rep.alpha3);
  return rep;
}

}  // namespace

SystemNorms compute_norms(const plant::Params& p, double eta, double epsilon,
                          int n_samples) {
  if (n_samples < 360) throw std::invalid_argument("norms: need at least 360 grid samples");
  p.validate();

  SystemNorms n;
  n.eta = eta;
  n.epsilon = epsilon;
  n.mu_M = -std::numeric_limits<double>::infinity();
  n.nu_M = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_samples; ++i) {
    const double psi = 2.0 * M_PI * i / n_samples;
    const double m = plant::effective_inertia(psi, p);
    n.mu_M = std::max(n.mu_M, m);
    n.nu_M = std::min(n.nu_M, m);
    n.mu_Lq = std::max(n.mu_Lq, std::abs(plant::effective_inertia_dpsi(psi, p)));
    n.g0 = std::max(n.g0, std::abs(plant::gravity_torque(psi, p)));
  }
  if (!(n.nu_M > 0)) throw std::runtime_error("norms: non-positive effective inertia");
  n.mu_B = p.c_fric;
  // A Coulomb level acts as a bounded state-independent torque, like gravity.
  if (p.friction == plant::FrictionModel::ViscousPlusCoulomb) n.g0 += p.coulomb_torque;
  return n;
}

CertificateReport check_absolute(const CertificateInput& in) { return check_impl(in, false); }

CertificateReport check_relative(const CertificateInput& in) { return check_impl(in, true); }

double error_envelope(double t, double x0_norm, const CertificateReport& rep) {
  return std::exp(-0.5 * rep.alpha3 / rep.alpha2 * t) * rep.alpha2 /
             std::sqrt(rep.alpha1) * x0_norm * x0_norm +
         rep.delta;
}

LambdaChoice choose_lambda(CertificateInput in, residual::Mode mode,
                           const LambdaPolicy& policy) {
  LambdaChoice choice;
  const double beta_r = mode == residual::Mode::Relative ? in.beta : 0.0;
  if (beta_r >= 0.5) return choice;
  const double lambda_cond =
      in.kp * in.kp / (2.0 * (1.0 - 2.0 * beta_r) * in.ki * in.norms.nu_M);
  // lambda <= 1 never satisfies the kp condition, so the grid floor is
  // max(condition bound, 1).
  const double lo = std::max(lambda_cond, 1.0) * (1.0 + 1e-6);
  const double hi = lo * policy.span_factor;
  const int npts = std::max(policy.grid_points, 2);
  for (int i = 0; i < npts; ++i) {
    in.lambda = lo * std::pow(hi / lo, static_cast<double>(i) / (npts - 1));
    const CertificateReport rep = mode == residual::Mode::Relative
                                      ? check_relative(in)
                                      : check_absolute(in);
    if (rep.certified() && (!choice.found || rep.delta < choice.report.delta)) {
      choice.found = true;
      choice.lambda = in.lambda;
      choice.report = rep;
    }
  }
  return choice;
}

BetaSearchResult max_safe_beta(double kp, double ki, const SystemNorms& norms,
                               double omega0, double alpha0, const LambdaPolicy& policy,
                               double tol) {
  CertificateInput in;
  in.kp = kp;
  in.ki = ki;
  in.omega0 = omega0;
  in.alpha0 = alpha0;
  in.norms = norms;

  const auto feasible = [&](double beta) {
    CertificateInput trial = in;
    trial.beta = beta;
    return choose_lambda(trial, residual::Mode::Relative, policy).found;
  };

  BetaSearchResult res;
  if (!feasible(0.0)) {
    res.diagnostics = "base gains do not certify at beta = 0";
    return res;
  }
  double lo = 0.0, hi = 0.5;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (feasible(mid) ? lo : hi) = mid;
  }
  res.beta_max = lo;
  res.feasible = true;
  CertificateInput at = in;
  at.beta = lo;
  res.lambda = choose_lambda(at, residual::Mode::Relative, policy).lambda;
  return res;
}

BetaThresholds relative_beta_thresholds(const CertificateInput& in) {
  const SystemNorms& n = in.norms;
  BetaThresholds th;
  th.from_lambda = 0.5 * (1.0 - in.kp * in.kp / (2.0 * in.lambda * in.ki * n.nu_M));
  const double nu_P = p_min_eig(in.kp, in.ki, in.lambda, n.nu_M);
  const double mu_P = p_max_eig(in.kp, in.ki, in.lambda, n.mu_M);
  if (in.lambda <= 1.0 || nu_P <= 0) {
    th.from_kp = -std::numeric_limits<double>::infinity();
  } else {
    const double root = std::sqrt(n.epsilon * n.epsilon * mu_P * n.mu_B /
                                  (in.lambda * in.lambda * nu_P * n.nu_M));
    const double d0 = 1.0 - 1.0 / in.lambda - root;
    th.from_kp =
        in.lambda * (d0 - 2.0 * n.mu_Lq * in.omega0 / in.kp) / (2.0 * in.ki);
  }
  th.from_ki = 1.0 - n.mu_M * n.mu_B * n.mu_B * in.omega0 * in.omega0 /
                         (2.0 * in.ki * n.nu_M * n.nu_M);
  return th;
}

RolloutResult adversarial_rollout(const plant::Params& p, const CertificateInput& in,
                                  const CertificateReport& rep, residual::Mode mode,
                                  const RolloutConfig& cfg) {
  plant::Params pl = p;
  pl.torque_limit = 1e9;  // the model-cancelling law must not saturate

  const double x0 = std::hypot(cfg.e0, cfg.edot0);
  plant::State s;
  s.psi = cfg.e0;
  s.omega = cfg.omega_ref + cfg.edot0;

  RolloutResult out;
  const int n_ctrl = static_cast<int>(std::round(cfg.horizon / cfg.dt));
  const double h = cfg.dt / cfg.substeps;
  out.t.reserve(n_ctrl + 1);
  out.x_norm.reserve(n_ctrl + 1);
  out.envelope.reserve(n_ctrl + 1);

  const auto observe = [&](double t, double e, double edot) {
    const double xn = std::hypot(e, edot);
    const double env = error_envelope(t, x0, rep);
    out.t.push_back(t);
    out.x_norm.push_back(xn);
    out.envelope.push_back(env);
    out.max_x_norm = std::max(out.max_x_norm, xn);
    out.max_excess = std::max(out.max_excess, xn - env);
    if (xn > env && !out.violated) {
      out.violated = true;
      out.violation_time = t;
    }
    out.final_x_norm = xn;
  };

  observe(0.0, cfg.e0, cfg.edot0);
  for (int k = 0; k < n_ctrl; ++k) {
    for (int j = 0; j < cfg.substeps; ++j) {
      const double t = k * cfg.dt + j * h;
      const double qr = cfg.omega_ref * t;
      const double e = s.psi - qr;
      const double edot = s.omega - cfg.omega_ref;
      const double m = plant::effective_inertia(s.psi, pl);
      const double dm = plant::effective_inertia_dpsi(s.psi, pl);
      const double b = pl.c_fric + 0.5 * dm * s.omega;
      const double u_ff = b * cfg.omega_ref + plant::gravity_torque(s.psi, pl);
      const double pi_term = in.kp * edot + in.ki * e;

      double pi = 0.0;
      if (cfg.adversary_on) {
        // Greedy ascent of Vdot: the residual enters d = [0, -(...) pi / M],
        // and grad V along that direction is x' P e2 = kp e / 2 + lambda M edot.
        const double w = 0.5 * in.kp * e + in.lambda * m * edot;
        if (mode == residual::Mode::Absolute)
          pi = w >= 0.0 ? -1.0 : 1.0;
        else
          pi = w * pi_term >= 0.0 ? -1.0 : 1.0;
      }

      double u;
      if (mode == residual::Mode::Absolute)
        u = u_ff - pi_term - in.beta * pi;
      else
        u = u_ff - pi_term * (1.0 + in.beta * pi);
      s = plant::step(s, u, h, pl);
    }
    const double t = (k + 1) * cfg.dt;
    observe(t, s.psi - cfg.omega_ref * t, s.omega - cfg.omega_ref);
  }
  return out;
}

}  // namespace crrl::stability
