#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crrl/config.hpp"
#include "crrl/pi_controller.hpp"
#include "crrl/plant.hpp"
#include "crrl/residual.hpp"
#include "crrl/sac.hpp"

namespace crrl::harness {

enum class Phase { RunIn, Training };

struct ExperimentConfig {
  plant::Params plant;
  control::PIGains gains{1.4, 0.1};
  double windup_limit = 10.0;
  control::Reference reference;

  residual::Mode mode = residual::Mode::Relative;
  double beta = 0.2;
  /// When set, beta is a fraction of the largest |u_base| seen over the last
  /// run-in epoch and the absolute tube width is resolved at activation time.
  bool beta_is_fraction_of_max_base = false;
  bool scale_during_training = true;

  sac::SacHyper sac;

  int epochs_total = 150;
  int runin_epochs = 65;
  int samples_per_epoch = 500;
  double dt = 0.01;
  int substeps = 10;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string outdir = "runs/exp";
  double torque_noise_std = 0.0;
  double omega_noise_std = 0.0;
  bool log_samples = false;
  int baseline_fit_passes = 40;

  void validate() const;
  static ExperimentConfig from_ini(const config::Ini& ini);
  /// Canonical snapshot; parsing it back reproduces this config exactly.
  std::string to_ini_string() const;
};

struct Sample {
  double t, psi, omega, omega_d, u_base, pi_out, u_total, reward;
};

struct RevolutionMetrics {
  double mae = 0, mse = 0, mean_reward = 0;
  int revolutions = 0;
};

/// Time-averaged metrics per completed revolution (boundaries where the
/// unwrapped angle crosses multiples of 2 pi, crossing linearly interpolated),
/// averaged over the complete revolutions in the slice. Throws when the slice
/// contains no complete revolution.
RevolutionMetrics compute_revolution_metrics(std::span<const Sample> samples);

struct EpochRecord {
  int epoch = 0;
  Phase phase = Phase::RunIn;
  double mae = 0, mse = 0, mean_reward = 0;
  long tube_violations = 0;
  double critic1_loss = 0, critic2_loss = 0, actor_loss = 0, alpha_loss = 0;
  double alpha = 0, mean_entropy = 0;
  long updates = 0;
};

struct RunResult {
  std::vector<EpochRecord> records;
  std::string run_dir;
  long clamp_events = 0;
  long agent_calls_runin = 0;  // must stay 0 by construction
  long tube_violations = 0;
  double resolved_beta = 0;
  double runin_max_u_base = 0;
  double imitation_mae = -1.0;  // baseline only
};

/// Full experiment: run-in epochs with the PI controller alone, then the
/// residual agent composed inside its tube, trained online. Deterministic
/// per (config, seed); writes epochs.csv, config.ini, run_meta.csv and a
/// final checkpoint into <outdir>/seed_<seed>/.
RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed);

/// Standalone-agent baseline: a run-in phase collects (feature, torque)
/// pairs from the tuned PI controller, the actor is pretrained to imitate
/// them, then the agent controls with full torque authority.
RunResult rl_baseline(const ExperimentConfig& cfg, std::uint64_t seed);

struct Summary {
  double runin_mae = 0, conv_mae = 0, improvement = 0;
  double runin_mean_reward = 0;
  double dip_median = 0, dip_max = 0, runin_worst_dip = 0;
  int dip_count = 0, conv_epochs = 0;
};

/// Post-run aggregation: improvement of the convergence window (last 20% of
/// epochs) over the run-in baseline, and the exploration-dip distribution of
/// training epochs whose reward fell below the run-in mean.
Summary summarize(const std::vector<EpochRecord>& records, int runin_epochs);

struct TuneConfig {
  int transient_revs = 2;
  int measure_revs = 10;
  double max_sim_time = 60.0;
};

/// Closed-loop MAE of one gain candidate; diverging or stalling loops are
/// reported unstable instead of throwing.
control::TuneOutcome evaluate_gains(const plant::Params& p, const control::Reference& ref,
                                    const control::PIGains& gains, double dt, int substeps,
                                    double windup_limit, const TuneConfig& tc);

control::TuneResult tune_pi(const plant::Params& p, const control::Reference& ref,
                            const control::GridSpec& grid, double dt, int substeps,
                            double windup_limit, const TuneConfig& tc);

struct SweepEntry {
  std::string label;
  ExperimentConfig cfg;
};

struct SweepRow {
  std::string label;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  Summary summary;
  long tube_violations = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

/// Runs every (entry, seed) combination; individual failures are recorded
/// and the sweep continues.
SweepResult sweep(const std::vector<SweepEntry>& entries);

// ---- CSV plumbing (schema v1, documented in the README) ----

std::string format_double(double v);  // shortest round-trip form via %.17g
void write_epochs_csv(const std::string& path, const std::vector<EpochRecord>& records);
std::vector<EpochRecord> read_epochs_csv(const std::string& path);
void write_summary_csv(const std::string& path, const Summary& s);
void write_sweep_csv(const std::string& path, const SweepResult& result);
void write_tune_csv(const std::string& path, const control::TuneResult& result);

}  // namespace crrl::harness
