#pragma once

#include <limits>
#include <string>
#include <vector>

#include "crrl/plant.hpp"
#include "crrl/residual.hpp"

namespace crrl::stability {

/// Scalar-system norms of the manipulator-equation terms, evaluated on a
/// dense grid over one inertia period. The damping operator norm mu_B is the
/// viscous coefficient; the inertia-variation (Coriolis) effect enters
/// through mu_Lq = sup |dM/dpsi|, and any bounded state-independent torque
/// (gravity, Coulomb level) through g0.
struct SystemNorms {
  double mu_M = 0, nu_M = 0;
  double mu_B = 0;
  double mu_Lq = 0;
  double g0 = 0;
  double eta = 0, epsilon = 0;
};

SystemNorms compute_norms(const plant::Params& p, double eta, double epsilon,
                          int n_samples = 3600);

struct CertificateInput {
  double kp = 0, ki = 0;
  double lambda = 0;
  double beta = 0;  // beta_a [N m] in Absolute mode, beta_r [-] in Relative mode
  double omega0 = 0, alpha0 = 0, theta0 = 0;
  SystemNorms norms;
};

struct Condition {
  bool ok = false;
  bool satisfiable = true;  // false when the inequality cannot hold for any gain value
  double value = 0;
  double threshold = 0;
};

struct CertificateReport {
  Condition lambda_ok, kp_ok, ki_ok;
  double alpha1 = 0, alpha2 = 0, alpha3 = 0, alpha4 = 0;
  double delta = std::numeric_limits<double>::infinity();
  bool p_positive_definite = false;
  bool q_positive_definite = false;

  bool certified() const {
    return lambda_ok.ok && kp_ok.ok && ki_ok.ok && p_positive_definite &&
           q_positive_definite && alpha1 > 0 && alpha3 > 0;
  }
};

/// Gain conditions and disturbance bound for the fixed-width residual tube.
CertificateReport check_absolute(const CertificateInput& in);

/// Gain conditions and disturbance bound for the base-proportional tube;
/// reduces exactly to check_absolute at beta = 0.
CertificateReport check_relative(const CertificateInput& in);

/// ||x(t)|| <= exp(-alpha3 t / (2 alpha2)) (alpha2/sqrt(alpha1)) ||x0||^2 + delta.
double error_envelope(double t, double x0_norm, const CertificateReport& rep);

/// Log-spaced lambda grid over [max(lambda_min, 1)(1+1e-6), 100 max(lambda_min, 1)];
/// the pick minimizes delta among certified grid points.
struct LambdaPolicy {
  double span_factor = 100.0;
  int grid_points = 200;
};

struct LambdaChoice {
  bool found = false;
  double lambda = std::numeric_limits<double>::quiet_NaN();
  CertificateReport report;
};

LambdaChoice choose_lambda(CertificateInput in, residual::Mode mode,
                           const LambdaPolicy& policy = {});

struct BetaSearchResult {
  double beta_max = 0;
  double lambda = std::numeric_limits<double>::quiet_NaN();
  bool feasible = false;
  std::string diagnostics;
};

/// Largest certifiable beta_r by bisection over (0, 1/2) with an inner
/// lambda feasibility search; tol-accurate per the search contract.
BetaSearchResult max_safe_beta(double kp, double ki, const SystemNorms& norms,
                               double omega0, double alpha0,
                               const LambdaPolicy& policy = {}, double tol = 1e-4);

/// beta_r values at which the three Theorem-style conditions cross from
/// satisfied to violated, at the given lambda (each holding the others aside).
struct BetaThresholds {
  double from_lambda, from_kp, from_ki;
};
BetaThresholds relative_beta_thresholds(const CertificateInput& in);

struct RolloutConfig {
  double omega_ref = 2.0 * M_PI;  // constant-velocity reference [rad/s]
  double horizon = 20.0;
  double dt = 0.01;
  int substeps = 10;
  bool adversary_on = true;  // worst-case sign policy; false freezes pi at 0
  double e0 = 0.0, edot0 = 0.0;  // initial tracking error
};

struct RolloutResult {
  bool violated = false;
  double violation_time = std::numeric_limits<double>::quiet_NaN();
  double max_x_norm = 0;
  double max_excess = -std::numeric_limits<double>::infinity();  // max(||x|| - envelope)
  double final_x_norm = 0;
  std::vector<double> t, x_norm, envelope;
};

/// Empirical stress test of the certificate: the model-cancelling policy
/// u = M qr'' + B qr' + g - kp edot - ki e drives the plant while the
/// residual channel is steered by a greedy sign adversary maximizing Vdot.
RolloutResult adversarial_rollout(const plant::Params& p, const CertificateInput& in,
                                  const CertificateReport& rep, residual::Mode mode,
                                  const RolloutConfig& cfg);

}  // namespace crrl::stability
