#include "crrl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "crrl/rng.hpp"

namespace fs = std::filesystem;

namespace crrl::harness {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

std::string phase_name(Phase p) { return p == Phase::RunIn ? "runin" : "training"; }

Phase phase_from_name(const std::string& s) {
  if (s == "runin") return Phase::RunIn;
  if (s == "training") return Phase::Training;
  throw std::runtime_error("csv: unknown phase " + s);
}

plant::State advance(plant::State s, double torque, double dt, int substeps,
                     const plant::Params& p) {
  const double h = dt / substeps;
  for (int j = 0; j < substeps; ++j) s = plant::step(s, torque, h, p);
  return s;
}

// Metrics with a fallback: epochs in which the crank never completed a
// revolution (possible under full-authority exploration) degrade to plain
// per-sample means instead of aborting the run.
RevolutionMetrics epoch_metrics(std::span<const Sample> samples) {
  try {
    return compute_revolution_metrics(samples);
  } catch (const std::exception&) {
    RevolutionMetrics m;
    for (const auto& s : samples) {
      const double e = s.omega_d - s.omega;
      m.mae += std::abs(e);
      m.mse += e * e;
      m.mean_reward += s.reward;
    }
    const double n = static_cast<double>(samples.size());
    m.mae /= n;
    m.mse /= n;
    m.mean_reward /= n;
    m.revolutions = 0;
    return m;
  }
}

}  // namespace

RevolutionMetrics compute_revolution_metrics(std::span<const Sample> samples) {
  if (samples.size() < 2) throw std::invalid_argument("metrics: need at least two samples");

  struct Boundary {
    double t, e_abs, e_sq, reward;
  };
  std::vector<Boundary> bounds;
  double next_b = kTwoPi * std::ceil(samples.front().psi / kTwoPi - 1e-12);
  if (next_b < samples.front().psi) next_b += kTwoPi;

  const auto at = [](const Sample& a, const Sample& b, double frac) {
    const auto lerp = [frac](double x, double y) { return x + frac * (y - x); };
    const double ea = std::abs(a.omega_d - a.omega);
    const double eb = std::abs(b.omega_d - b.omega);
    return Boundary{lerp(a.t, b.t), lerp(ea, eb), lerp(ea * ea, eb * eb),
                    lerp(a.reward, b.reward)};
  };

  double mae_sum = 0, mse_sum = 0, rew_sum = 0;
  int revolutions = 0;
  bool have_prev = false;
  double acc_mae = 0, acc_mse = 0, acc_rew = 0;
  Boundary last{};

  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    const Sample& a = samples[i];
    const Sample& b = samples[i + 1];
    Boundary seg_start = at(a, b, 0.0);
    while (next_b >= a.psi && next_b <= b.psi && b.psi > a.psi) {
      const double frac = (next_b - a.psi) / (b.psi - a.psi);
      const Boundary cross = at(a, b, frac);
      if (have_prev) {
        // close the trapezoid from the segment start to the crossing
        const double dt = cross.t - seg_start.t;
        acc_mae += 0.5 * (seg_start.e_abs + cross.e_abs) * dt;
        acc_mse += 0.5 * (seg_start.e_sq + cross.e_sq) * dt;
        acc_rew += 0.5 * (seg_start.reward + cross.reward) * dt;
        const double period = cross.t - last.t;
        if (period > 0) {
          mae_sum += acc_mae / period;
          mse_sum += acc_mse / period;
          rew_sum += acc_rew / period;
          ++revolutions;
        }
      }
      last = cross;
      have_prev = true;
      acc_mae = acc_mse = acc_rew = 0;
      seg_start = cross;
      next_b += kTwoPi;
    }
    if (have_prev) {
      const Boundary end = at(a, b, 1.0);
      const double dt = end.t - seg_start.t;
      acc_mae += 0.5 * (seg_start.e_abs + end.e_abs) * dt;
      acc_mse += 0.5 * (seg_start.e_sq + end.e_sq) * dt;
      acc_rew += 0.5 * (seg_start.reward + end.reward) * dt;
    }
  }

  if (revolutions == 0)
    throw std::runtime_error("metrics: slice contains no complete revolution");
  RevolutionMetrics m;
  m.mae = mae_sum / revolutions;
  m.mse = mse_sum / revolutions;
  m.mean_reward = rew_sum / revolutions;
  m.revolutions = revolutions;
  return m;
}

void ExperimentConfig::validate() const {
  plant.validate();
  gains.validate();
  if (runin_epochs < 0 || epochs_total <= 0 || runin_epochs > epochs_total)
    throw std::invalid_argument("run: need 0 <= runin_epochs <= epochs_total");
  if (samples_per_epoch < 2) throw std::invalid_argument("run: samples_per_epoch too small");
  if (!(dt > 0.0) || substeps < 1) throw std::invalid_argument("run: bad dt/substeps");
  if (seeds.empty()) throw std::invalid_argument("run: seeds must be non-empty");
  if (beta < 0.0) throw std::invalid_argument("residual: beta must be >= 0");
  sac.validate();
}

ExperimentConfig ExperimentConfig::from_ini(const config::Ini& ini) {
  ExperimentConfig c;
  c.plant.l1 = ini.get_double("plant.l1", c.plant.l1);
  c.plant.l2 = ini.get_double("plant.l2", c.plant.l2);
  c.plant.r1 = ini.get_double("plant.r1", c.plant.r1);
  c.plant.r2 = ini.get_double("plant.r2", c.plant.r2);
  c.plant.i1 = ini.get_double("plant.i1", c.plant.i1);
  c.plant.i2 = ini.get_double("plant.i2", c.plant.i2);
  c.plant.m1 = ini.get_double("plant.m1", c.plant.m1);
  c.plant.m2 = ini.get_double("plant.m2", c.plant.m2);
  c.plant.m_slider = ini.get_double("plant.m_slider", c.plant.m_slider);
  c.plant.c_fric = ini.get_double("plant.c_fric", c.plant.c_fric);
  c.plant.torque_limit = ini.get_double("plant.torque_limit", c.plant.torque_limit);
  c.plant.gravity = ini.get_double("plant.gravity", c.plant.gravity);
  c.plant.coulomb_torque = ini.get_double("plant.coulomb_torque", c.plant.coulomb_torque);
  const std::string fric = ini.get_string("plant.friction", "viscous");
  if (fric == "viscous")
    c.plant.friction = plant::FrictionModel::Viscous;
  else if (fric == "viscous_plus_coulomb")
    c.plant.friction = plant::FrictionModel::ViscousPlusCoulomb;
  else
    throw std::runtime_error("config: unknown plant.friction " + fric);
  const std::string com = ini.get_string("plant.com_interpretation", "verbatim");
  if (com == "swapped")
    std::swap(c.plant.r1, c.plant.r2);
  else if (com != "verbatim")
    throw std::runtime_error("config: unknown plant.com_interpretation " + com);

  c.gains.kp = ini.get_double("base.kp", c.gains.kp);
  c.gains.ki = ini.get_double("base.ki", c.gains.ki);
  c.windup_limit = ini.get_double("base.windup_limit", c.windup_limit);

  const std::string kind = ini.get_string("reference.kind", "constant");
  if (kind == "constant")
    c.reference.kind = control::Reference::Kind::Constant;
  else if (kind == "sine_of_angle")
    c.reference.kind = control::Reference::Kind::SineOfAngle;
  else
    throw std::runtime_error("config: unknown reference.kind " + kind);
  c.reference.rpm = ini.get_double("reference.rpm", c.reference.rpm);
  c.reference.amplitude_rpm = ini.get_double("reference.amplitude_rpm", c.reference.amplitude_rpm);
  c.reference.offset_rpm = ini.get_double("reference.offset_rpm", c.reference.offset_rpm);

  const std::string mode = ini.get_string("residual.mode", "relative");
  if (mode == "relative")
    c.mode = residual::Mode::Relative;
  else if (mode == "absolute")
    c.mode = residual::Mode::Absolute;
  else
    throw std::runtime_error("config: unknown residual.mode " + mode);
  c.beta = ini.get_double("residual.beta", c.beta);
  c.beta_is_fraction_of_max_base =
      ini.get_bool("residual.beta_is_fraction_of_max_base", c.beta_is_fraction_of_max_base);
  c.scale_during_training =
      ini.get_bool("residual.scale_during_training", c.scale_during_training);

  c.sac.gamma = ini.get_double("sac.gamma", c.sac.gamma);
  c.sac.lr = ini.get_double("sac.lr", c.sac.lr);
  c.sac.batch_size = static_cast<int>(ini.get_long("sac.batch_size", c.sac.batch_size));
  c.sac.buffer_capacity = static_cast<std::size_t>(
      ini.get_double("sac.buffer_capacity", static_cast<double>(c.sac.buffer_capacity)));
  c.sac.tau = ini.get_double("sac.tau", c.sac.tau);
  c.sac.target_entropy = ini.get_double("sac.target_entropy", c.sac.target_entropy);
  c.sac.init_log_alpha = ini.get_double("sac.init_log_alpha", c.sac.init_log_alpha);
  c.sac.update_every = static_cast<int>(ini.get_long("sac.update_every", c.sac.update_every));
  {
    std::vector<long> ah, ch;
    for (int w : c.sac.actor_hidden) ah.push_back(w);
    for (int w : c.sac.critic_hidden) ch.push_back(w);
    ah = ini.get_long_list("sac.actor_hidden", ah);
    ch = ini.get_long_list("sac.critic_hidden", ch);
    c.sac.actor_hidden.assign(ah.begin(), ah.end());
    c.sac.critic_hidden.assign(ch.begin(), ch.end());
  }

  c.epochs_total = static_cast<int>(ini.get_long("run.epochs_total", c.epochs_total));
  c.runin_epochs = static_cast<int>(ini.get_long("run.runin_epochs", c.runin_epochs));
  c.samples_per_epoch =
      static_cast<int>(ini.get_long("run.samples_per_epoch", c.samples_per_epoch));
  c.dt = ini.get_double("run.dt", c.dt);
  c.substeps = static_cast<int>(ini.get_long("run.substeps", c.substeps));
  {
    std::vector<long> seeds;
    for (auto s : c.seeds) seeds.push_back(static_cast<long>(s));
    seeds = ini.get_long_list("run.seeds", seeds);
    c.seeds.assign(seeds.begin(), seeds.end());
  }
  c.outdir = ini.get_string("run.outdir", c.outdir);
  c.torque_noise_std = ini.get_double("run.torque_noise_std", c.torque_noise_std);
  c.omega_noise_std = ini.get_double("run.omega_noise_std", c.omega_noise_std);
  c.log_samples = ini.get_bool("run.log_samples", c.log_samples);
  c.baseline_fit_passes =
      static_cast<int>(ini.get_long("run.baseline_fit_passes", c.baseline_fit_passes));
  return c;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string ExperimentConfig::to_ini_string() const {
  std::ostringstream o;
  const auto d = [](double v) { return format_double(v); };
  o << "[plant]\n";
  o << "l1 = " << d(plant.l1) << "\nl2 = " << d(plant.l2) << "\nr1 = " << d(plant.r1)
    << "\nr2 = " << d(plant.r2) << "\ni1 = " << d(plant.i1) << "\ni2 = " << d(plant.i2)
    << "\nm1 = " << d(plant.m1) << "\nm2 = " << d(plant.m2)
    << "\nm_slider = " << d(plant.m_slider) << "\nc_fric = " << d(plant.c_fric)
    << "\ntorque_limit = " << d(plant.torque_limit) << "\ngravity = " << d(plant.gravity)
    << "\nfriction = "
    << (plant.friction == plant::FrictionModel::Viscous ? "viscous" : "viscous_plus_coulomb")
    << "\ncoulomb_torque = " << d(plant.coulomb_torque) << "\n";
  o << "\n[base]\nkp = " << d(gains.kp) << "\nki = " << d(gains.ki)
    << "\nwindup_limit = " << d(windup_limit) << "\n";
  o << "\n[reference]\nkind = "
    << (reference.kind == control::Reference::Kind::Constant ? "constant" : "sine_of_angle")
    << "\nrpm = " << d(reference.rpm) << "\namplitude_rpm = " << d(reference.amplitude_rpm)
    << "\noffset_rpm = " << d(reference.offset_rpm) << "\n";
  o << "\n[residual]\nmode = "
    << (mode == residual::Mode::Relative ? "relative" : "absolute")
    << "\nbeta = " << d(beta)
    << "\nbeta_is_fraction_of_max_base = " << (beta_is_fraction_of_max_base ? "true" : "false")
    << "\nscale_during_training = " << (scale_during_training ? "true" : "false") << "\n";
  o << "\n[sac]\ngamma = " << d(sac.gamma) << "\nlr = " << d(sac.lr)
    << "\nbatch_size = " << sac.batch_size << "\nbuffer_capacity = " << sac.buffer_capacity
    << "\ntau = " << d(sac.tau) << "\ntarget_entropy = " << d(sac.target_entropy)
    << "\ninit_log_alpha = " << d(sac.init_log_alpha)
    << "\nupdate_every = " << sac.update_every << "\nactor_hidden = ";
  for (std::size_t i = 0; i < sac.actor_hidden.size(); ++i)
    o << (i ? "," : "") << sac.actor_hidden[i];
  o << "\ncritic_hidden = ";
  for (std::size_t i = 0; i < sac.critic_hidden.size(); ++i)
    o << (i ? "," : "") << sac.critic_hidden[i];
  o << "\n";
  o << "\n[run]\nepochs_total = " << epochs_total << "\nrunin_epochs = " << runin_epochs
    << "\nsamples_per_epoch = " << samples_per_epoch << "\ndt = " << d(dt)
    << "\nsubsteps = " << substeps << "\nseeds = ";
  for (std::size_t i = 0; i < seeds.size(); ++i) o << (i ? "," : "") << seeds[i];
  o << "\noutdir = " << outdir << "\ntorque_noise_std = " << d(torque_noise_std)
    << "\nomega_noise_std = " << d(omega_noise_std)
    << "\nlog_samples = " << (log_samples ? "true" : "false")
    << "\nbaseline_fit_passes = " << baseline_fit_passes << "\n";
  return o.str();
}

namespace {

struct LossAccum {
  double critic1 = 0, critic2 = 0, actor = 0, alpha_loss = 0, alpha = 0, entropy = 0;
  long n = 0;

  void add(const sac::LossReport& r) {
    critic1 += r.critic1;
    critic2 += r.critic2;
    actor += r.actor;
    alpha_loss += r.alpha_loss;
    alpha += r.alpha;
    entropy += r.mean_entropy;
    ++n;
  }

  void fill(EpochRecord& rec) const {
    rec.updates = n;
    if (n == 0) return;
    rec.critic1_loss = critic1 / n;
    rec.critic2_loss = critic2 / n;
    rec.actor_loss = actor / n;
    rec.alpha_loss = alpha_loss / n;
    rec.alpha = alpha / n;
    rec.mean_entropy = entropy / n;
  }
};

void write_samples_header(std::ofstream& f) {
  f << "t,psi,omega,omega_d,u_base,pi_out,u_total,reward\n";
}

void write_sample_row(std::ofstream& f, const Sample& s) {
  f << format_double(s.t) << ',' << format_double(s.psi) << ',' << format_double(s.omega)
    << ',' << format_double(s.omega_d) << ',' << format_double(s.u_base) << ','
    << format_double(s.pi_out) << ',' << format_double(s.u_total) << ','
    << format_double(s.reward) << '\n';
}

void write_run_outputs(const fs::path& dir, const ExperimentConfig& cfg,
                       const RunResult& result, const sac::Agent* agent) {
  write_epochs_csv((dir / "epochs.csv").string(), result.records);
  {
    std::ofstream f(dir / "config.ini");
    f << cfg.to_ini_string();
  }
  {
    std::ofstream f(dir / "run_meta.csv");
    f << "key,value\n";
    f << "resolved_beta," << format_double(result.resolved_beta) << "\n";
    f << "runin_max_u_base," << format_double(result.runin_max_u_base) << "\n";
    f << "clamp_events," << result.clamp_events << "\n";
    f << "agent_calls_runin," << result.agent_calls_runin << "\n";
    f << "tube_violations," << result.tube_violations << "\n";
    if (result.imitation_mae >= 0)
      f << "imitation_mae," << format_double(result.imitation_mae) << "\n";
  }
  if (agent) {
    std::ofstream f(dir / "checkpoint.bin", std::ios::binary);
    sac::save_checkpoint(f, *agent);
  }
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const fs::path run_dir = fs::path(cfg.outdir) / ("seed_" + std::to_string(seed));
  fs::create_directories(run_dir);

  Rng master(seed);
  Rng rng_init = master.fork("init");
  Rng rng_act = master.fork("act");
  Rng rng_train = master.fork("train");
  Rng rng_noise = master.fork("noise");

  residual::Config rcfg;
  rcfg.mode = cfg.mode;
  rcfg.beta = cfg.beta;
  rcfg.scale_during_training = cfg.scale_during_training;
  rcfg.omega_norm = 2.0 * control::reference_max(cfg.reference);
  rcfg.torque_norm = cfg.plant.torque_limit;

  const int fdim = cfg.scale_during_training ? 3 : 4;
  sac::Agent agent = sac::make_agent(cfg.sac, fdim, 1, rng_init);
  sac::ReplayBuffer buffer(cfg.sac.buffer_capacity, fdim, 1);

  plant::State s;
  control::ControllerState cs;

  RunResult result;
  result.run_dir = run_dir.string();
  result.resolved_beta = cfg.beta;

  std::ofstream samples_csv;
  if (cfg.log_samples) {
    samples_csv.open(run_dir / "samples.csv");
    write_samples_header(samples_csv);
  }

  bool have_pending = false;
  residual::FeatureVector pending_y;
  double pending_a = 0, pending_scale = 0, pending_r = 0;

  std::vector<Sample> samples(cfg.samples_per_epoch);
  long training_step = 0;

  const auto dump_and_fail = [&](const std::string& why) {
    write_run_outputs(run_dir, cfg, result, &agent);
    std::ofstream f(run_dir / "error.txt");
    f << why << "\n";
    throw std::runtime_error("run_experiment: " + why);
  };

  for (int epoch = 0; epoch < cfg.epochs_total; ++epoch) {
    const bool training = epoch >= cfg.runin_epochs;
    LossAccum losses;
    for (int i = 0; i < cfg.samples_per_epoch; ++i) {
      const double omega_meas =
          cfg.omega_noise_std > 0 ? s.omega + rng_noise.normal(0.0, cfg.omega_noise_std)
                                  : s.omega;
      const double omega_d = control::reference_value(cfg.reference, s.psi);
      const auto [u_base, cs_next] =
          control::pi_action(cs, omega_d, omega_meas, cfg.gains, cfg.dt, cfg.windup_limit);
      cs = cs_next;

      double u_pre = u_base;
      double pi_out = 0.0;
      residual::FeatureVector y;
      double scale = 0.0;
      if (training) {
        y = residual::feature_map(s.psi, omega_meas, u_base, rcfg);
        scale = residual::action_scale(u_base, rcfg);
        if (have_pending) {
          buffer.push(pending_y.values(), {&pending_a, 1}, pending_r, y.values(), false,
                      pending_scale, scale);
          have_pending = false;
        }
        const auto a = sac::sample_action(agent, y.values(), rng_act);
        pi_out = a.action;
        u_pre = residual::compose(u_base, pi_out, rcfg);
        const auto tube = residual::tube_bounds(u_base, rcfg);
        if (u_pre < tube.lo - 1e-9 || u_pre > tube.hi + 1e-9) {
          ++result.tube_violations;
          dump_and_fail("tube violation at epoch " + std::to_string(epoch));
        }
      }

      double u_cmd = u_pre;
      if (cfg.torque_noise_std > 0) u_cmd += rng_noise.normal(0.0, cfg.torque_noise_std);
      bool clamped = false;
      u_cmd = plant::clamp_torque(u_cmd, cfg.plant, &clamped);
      if (clamped) ++result.clamp_events;

      try {
        s = advance(s, u_cmd, cfg.dt, cfg.substeps, cfg.plant);
      } catch (const std::exception& e) {
        dump_and_fail(std::string("plant error: ") + e.what());
      }

      const double omega_d_next = control::reference_value(cfg.reference, s.psi);
      const double err_next = omega_d_next - s.omega;
      const double reward = -0.5 * err_next * err_next;

      if (training) {
        pending_y = y;
        pending_a = residual::training_action(u_base, pi_out, rcfg);
        pending_scale = scale;
        pending_r = reward;
        have_pending = true;

        if (buffer.size() >= static_cast<std::size_t>(cfg.sac.batch_size) &&
            training_step % cfg.sac.update_every == 0) {
          try {
            losses.add(sac::update(agent, buffer, rng_train));
          } catch (const std::exception& e) {
            dump_and_fail(std::string("sac error: ") + e.what());
          }
        }
        ++training_step;
      }

      samples[i] = Sample{s.t, s.psi, s.omega, omega_d_next, u_base, pi_out, u_pre, reward};
      if (cfg.log_samples) write_sample_row(samples_csv, samples[i]);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = training ? Phase::Training : Phase::RunIn;
    const RevolutionMetrics m = epoch_metrics(samples);
    rec.mae = m.mae;
    rec.mse = m.mse;
    rec.mean_reward = m.mean_reward;
    rec.tube_violations = 0;
    losses.fill(rec);
    result.records.push_back(rec);

    if (epoch == cfg.runin_epochs - 1) {
      double max_base = 0.0;
      for (const auto& sample : samples) max_base = std::max(max_base, std::abs(sample.u_base));
      result.runin_max_u_base = max_base;
      if (cfg.beta_is_fraction_of_max_base) {
        rcfg.beta = cfg.beta * max_base;
        result.resolved_beta = rcfg.beta;
      }
    }
  }

  write_run_outputs(run_dir, cfg, result, &agent);
  return result;
}

Summary summarize(const std::vector<EpochRecord>& records, int runin_epochs) {
  const int n = static_cast<int>(records.size());
  if (runin_epochs <= 0 || runin_epochs > n)
    throw std::invalid_argument("summarize: bad run-in window");
  const int conv_n = std::max(1, static_cast<int>(std::lround(0.2 * n)));
  if (n - conv_n < runin_epochs)
    throw std::invalid_argument("summarize: convergence window reaches into the run-in phase");

  Summary s;
  s.conv_epochs = conv_n;
  for (int i = 0; i < runin_epochs; ++i) {
    s.runin_mae += records[i].mae;
    s.runin_mean_reward += records[i].mean_reward;
  }
  s.runin_mae /= runin_epochs;
  s.runin_mean_reward /= runin_epochs;
  for (int i = n - conv_n; i < n; ++i) s.conv_mae += records[i].mae;
  s.conv_mae /= conv_n;
  s.improvement = (s.runin_mae - s.conv_mae) / s.runin_mae;

  const double denom = std::max(std::abs(s.runin_mean_reward), 1e-300);
  std::vector<double> dips;
  for (int i = runin_epochs; i < n; ++i) {
    const double r = records[i].mean_reward;
    if (r < s.runin_mean_reward) dips.push_back((s.runin_mean_reward - r) / denom);
  }
  for (int i = 0; i < runin_epochs; ++i) {
    const double r = records[i].mean_reward;
    if (r < s.runin_mean_reward)
      s.runin_worst_dip = std::max(s.runin_worst_dip, (s.runin_mean_reward - r) / denom);
  }
  s.dip_count = static_cast<int>(dips.size());
  if (!dips.empty()) {
    std::sort(dips.begin(), dips.end());
    s.dip_max = dips.back();
    const std::size_t mid = dips.size() / 2;
    s.dip_median = dips.size() % 2 ? dips[mid] : 0.5 * (dips[mid - 1] + dips[mid]);
  }
  return s;
}

control::TuneOutcome evaluate_gains(const plant::Params& p, const control::Reference& ref,
                                    const control::PIGains& gains, double dt, int substeps,
                                    double windup_limit, const TuneConfig& tc) {
  plant::State s;
  control::ControllerState cs;
  const double omega_cap = 50.0 * std::max(1.0, control::reference_max(ref));

  const auto stable = [&]() { return std::isfinite(s.omega) && std::abs(s.omega) < omega_cap; };

  // transient: wait out the spin-up
  const double transient_target = tc.transient_revs * kTwoPi;
  while (s.psi < transient_target) {
    const double omega_d = control::reference_value(ref, s.psi);
    const auto [u, cs2] = control::pi_action(cs, omega_d, s.omega, gains, dt, windup_limit);
    cs = cs2;
    s = advance(s, plant::clamp_torque(u, p), dt, substeps, p);
    if (!stable() || s.t > tc.max_sim_time) return {0.0, false};
  }

  std::vector<Sample> samples;
  const double measure_target = s.psi + tc.measure_revs * kTwoPi;
  while (s.psi < measure_target + kTwoPi * 0.25) {
    const double omega_d = control::reference_value(ref, s.psi);
    const auto [u, cs2] = control::pi_action(cs, omega_d, s.omega, gains, dt, windup_limit);
    cs = cs2;
    s = advance(s, plant::clamp_torque(u, p), dt, substeps, p);
    if (!stable() || s.t > tc.max_sim_time) return {0.0, false};
    const double omega_d_next = control::reference_value(ref, s.psi);
    const double e = omega_d_next - s.omega;
    samples.push_back(Sample{s.t, s.psi, s.omega, omega_d_next, u, 0.0, u, -0.5 * e * e});
  }
  try {
    return {compute_revolution_metrics(samples).mae, true};
  } catch (const std::exception&) {
    return {0.0, false};
  }
}

control::TuneResult tune_pi(const plant::Params& p, const control::Reference& ref,
                            const control::GridSpec& grid, double dt, int substeps,
                            double windup_limit, const TuneConfig& tc) {
  return control::grid_search_tune(
      [&](const control::PIGains& g) {
        return evaluate_gains(p, ref, g, dt, substeps, windup_limit, tc);
      },
      grid);
}

SweepResult sweep(const std::vector<SweepEntry>& entries) {
  if (entries.empty()) throw std::invalid_argument("sweep: empty axis");
  SweepResult res;
  for (const auto& entry : entries) {
    for (const auto seed : entry.cfg.seeds) {
      SweepRow row;
      row.label = entry.label;
      row.seed = seed;
      try {
        const RunResult run = run_experiment(entry.cfg, seed);
        row.summary = summarize(run.records, entry.cfg.runin_epochs);
        row.tube_violations = run.tube_violations;
        row.ok = true;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      res.rows.push_back(std::move(row));
    }
  }
  return res;
}

RunResult rl_baseline(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const fs::path run_dir = fs::path(cfg.outdir) / ("seed_" + std::to_string(seed));
  fs::create_directories(run_dir);

  Rng master(seed);
  Rng rng_init = master.fork("init");
  Rng rng_act = master.fork("act");
  Rng rng_train = master.fork("train");
  Rng rng_fit = master.fork("fit");

  // Full-authority agent: u = torque_limit * pi, i.e. a fixed-width tube of
  // the whole input range around a zero base signal.
  residual::Config rcfg;
  rcfg.mode = residual::Mode::Absolute;
  rcfg.beta = cfg.plant.torque_limit;
  rcfg.scale_during_training = true;
  rcfg.omega_norm = 2.0 * control::reference_max(cfg.reference);
  rcfg.torque_norm = cfg.plant.torque_limit;

  const int fdim = 3;
  sac::Agent agent = sac::make_agent(cfg.sac, fdim, 1, rng_init);
  sac::ReplayBuffer buffer(cfg.sac.buffer_capacity, fdim, 1);

  plant::State s;
  control::ControllerState cs;

  RunResult result;
  result.run_dir = run_dir.string();
  result.resolved_beta = rcfg.beta;

  std::vector<Sample> samples(cfg.samples_per_epoch);
  std::vector<std::array<double, 4>> imit_x;  // features (dim 3 used)
  std::vector<double> imit_u;

  // ---- run-in: tuned PI acts, imitation data collected ----
  for (int epoch = 0; epoch < cfg.runin_epochs; ++epoch) {
    for (int i = 0; i < cfg.samples_per_epoch; ++i) {
      const double omega_d = control::reference_value(cfg.reference, s.psi);
      const auto [u_base, cs_next] =
          control::pi_action(cs, omega_d, s.omega, cfg.gains, cfg.dt, cfg.windup_limit);
      cs = cs_next;
      const auto y = residual::feature_map(s.psi, s.omega, 0.0, rcfg);
      imit_x.push_back(y.v);
      imit_u.push_back(u_base);
      bool clamped = false;
      const double u_cmd = plant::clamp_torque(u_base, cfg.plant, &clamped);
      if (clamped) ++result.clamp_events;
      s = advance(s, u_cmd, cfg.dt, cfg.substeps, cfg.plant);
      const double omega_d_next = control::reference_value(cfg.reference, s.psi);
      const double e = omega_d_next - s.omega;
      samples[i] = Sample{s.t, s.psi, s.omega, omega_d_next, u_base, 0.0, u_base, -0.5 * e * e};
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = Phase::RunIn;
    const RevolutionMetrics m = epoch_metrics(samples);
    rec.mae = m.mae;
    rec.mse = m.mse;
    rec.mean_reward = m.mean_reward;
    result.records.push_back(rec);
  }

  // ---- pretraining: actor mean imitates the tuned PI ----
  {
    const double lim = cfg.plant.torque_limit;
    std::vector<double> target_mu(imit_u.size());
    for (std::size_t i = 0; i < imit_u.size(); ++i) {
      const double a = std::clamp(imit_u[i] / lim, -0.999999, 0.999999);
      target_mu[i] = std::atanh(a);
    }
    const double target_ls = -2.0;
    const int bsz = 128;
    std::vector<double> grad(agent.nets.actor.size());
    nn::Workspace ws;
    for (int pass = 0; pass < cfg.baseline_fit_passes; ++pass) {
      const int batches = static_cast<int>(imit_x.size()) / bsz;
      for (int b = 0; b < batches; ++b) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (int k = 0; k < bsz; ++k) {
          const std::size_t i = rng_fit.index(imit_x.size());
          const std::span<const double> x{imit_x[i].data(), 3};
          nn::forward_cached(agent.nets.actor_spec, agent.nets.actor, x, ws);
          const auto& out = ws.acts.back();
          const double cot[2] = {2.0 * (out[0] - target_mu[i]) / bsz,
                                 0.2 * (out[1] - target_ls) / bsz};
          nn::backward(agent.nets.actor_spec, agent.nets.actor, ws, cot, grad);
        }
        nn::adam_step(agent.nets.actor, grad, agent.adam_actor);
      }
    }
  }

  // ---- imitation quality: deterministic mean action on a fresh episode ----
  {
    plant::State es;
    std::vector<Sample> esamples;
    while (es.psi < 4.0 * kTwoPi) {  // transient
      const auto y = residual::feature_map(es.psi, es.omega, 0.0, rcfg);
      const double u = cfg.plant.torque_limit * sac::mean_action(agent, y.values());
      es = advance(es, plant::clamp_torque(u, cfg.plant), cfg.dt, cfg.substeps, cfg.plant);
      if (es.t > 60.0) break;
    }
    const double target = es.psi + 10.0 * kTwoPi;
    while (es.psi < target) {
      const auto y = residual::feature_map(es.psi, es.omega, 0.0, rcfg);
      const double u = cfg.plant.torque_limit * sac::mean_action(agent, y.values());
      es = advance(es, plant::clamp_torque(u, cfg.plant), cfg.dt, cfg.substeps, cfg.plant);
      const double omega_d_next = control::reference_value(cfg.reference, es.psi);
      const double e = omega_d_next - es.omega;
      esamples.push_back(
          Sample{es.t, es.psi, es.omega, omega_d_next, 0.0, 0.0, u, -0.5 * e * e});
      if (es.t > 120.0) break;
    }
    result.imitation_mae = epoch_metrics(esamples).mae;
  }

  // ---- standalone training with full torque authority ----
  bool have_pending = false;
  residual::FeatureVector pending_y;
  double pending_a = 0, pending_r = 0;
  long training_step = 0;
  const double scale = rcfg.beta;  // constant action scale

  for (int epoch = cfg.runin_epochs; epoch < cfg.epochs_total; ++epoch) {
    LossAccum losses;
    for (int i = 0; i < cfg.samples_per_epoch; ++i) {
      const auto y = residual::feature_map(s.psi, s.omega, 0.0, rcfg);
      if (have_pending) {
        buffer.push(pending_y.values(), {&pending_a, 1}, pending_r, y.values(), false, scale,
                    scale);
        have_pending = false;
      }
      const auto a = sac::sample_action(agent, y.values(), rng_act);
      const double u_pre = residual::compose(0.0, a.action, rcfg);
      bool clamped = false;
      const double u_cmd = plant::clamp_torque(u_pre, cfg.plant, &clamped);
      if (clamped) ++result.clamp_events;
      s = advance(s, u_cmd, cfg.dt, cfg.substeps, cfg.plant);
      const double omega_d_next = control::reference_value(cfg.reference, s.psi);
      const double err = omega_d_next - s.omega;
      const double reward = -0.5 * err * err;

      pending_y = y;
      pending_a = residual::training_action(0.0, a.action, rcfg);
      pending_r = reward;
      have_pending = true;

      if (buffer.size() >= static_cast<std::size_t>(cfg.sac.batch_size) &&
          training_step % cfg.sac.update_every == 0)
        losses.add(sac::update(agent, buffer, rng_train));
      ++training_step;

      samples[i] = Sample{s.t, s.psi, s.omega, omega_d_next, 0.0, a.action, u_pre, reward};
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = Phase::Training;
    const RevolutionMetrics m = epoch_metrics(samples);
    rec.mae = m.mae;
    rec.mse = m.mse;
    rec.mean_reward = m.mean_reward;
    losses.fill(rec);
    result.records.push_back(rec);
  }

  write_run_outputs(run_dir, cfg, result, &agent);
  return result;
}

void write_epochs_csv(const std::string& path, const std::vector<EpochRecord>& records) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("csv: cannot write " + path);
  f << "epoch,phase,mae,mse,mean_reward,tube_violations,critic1_loss,critic2_loss,"
       "actor_loss,alpha_loss,alpha,mean_entropy,updates\n";
  for (const auto& r : records) {
    f << r.epoch << ',' << phase_name(r.phase) << ',' << format_double(r.mae) << ','
      << format_double(r.mse) << ',' << format_double(r.mean_reward) << ','
      << r.tube_violations << ',' << format_double(r.critic1_loss) << ','
      << format_double(r.critic2_loss) << ',' << format_double(r.actor_loss) << ','
      << format_double(r.alpha_loss) << ',' << format_double(r.alpha) << ','
      << format_double(r.mean_entropy) << ',' << r.updates << '\n';
  }
}

std::vector<EpochRecord> read_epochs_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("csv: cannot read " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("csv: empty file " + path);
  std::vector<EpochRecord> records;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 13) throw std::runtime_error("csv: bad row in " + path);
    EpochRecord r;
    r.epoch = std::stoi(cells[0]);
    r.phase = phase_from_name(cells[1]);
    r.mae = std::stod(cells[2]);
    r.mse = std::stod(cells[3]);
    r.mean_reward = std::stod(cells[4]);
    r.tube_violations = std::stol(cells[5]);
    r.critic1_loss = std::stod(cells[6]);
    r.critic2_loss = std::stod(cells[7]);
    r.actor_loss = std::stod(cells[8]);
    r.alpha_loss = std::stod(cells[9]);
    r.alpha = std::stod(cells[10]);
    r.mean_entropy = std::stod(cells[11]);
    r.updates = std::stol(cells[12]);
    records.push_back(r);
  }
  return records;
}

void write_summary_csv(const std::string& path, const Summary& s) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("csv: cannot write " + path);
  f << "runin_mae,conv_mae,improvement,runin_mean_reward,dip_median,dip_max,"
       "runin_worst_dip,dip_count,conv_epochs\n";
  f << format_double(s.runin_mae) << ',' << format_double(s.conv_mae) << ','
    << format_double(s.improvement) << ',' << format_double(s.runin_mean_reward) << ','
    << format_double(s.dip_median) << ',' << format_double(s.dip_max) << ','
    << format_double(s.runin_worst_dip) << ',' << s.dip_count << ',' << s.conv_epochs << '\n';
}

void write_sweep_csv(const std::string& path, const SweepResult& result) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("csv: cannot write " + path);
  f << "label,seed,ok,runin_mae,conv_mae,improvement,dip_median,dip_max,runin_worst_dip,"
       "tube_violations,error\n";
  for (const auto& r : result.rows) {
    f << r.label << ',' << r.seed << ',' << (r.ok ? 1 : 0) << ','
      << format_double(r.summary.runin_mae) << ',' << format_double(r.summary.conv_mae) << ','
      << format_double(r.summary.improvement) << ',' << format_double(r.summary.dip_median)
      << ',' << format_double(r.summary.dip_max) << ','
      << format_double(r.summary.runin_worst_dip) << ',' << r.tube_violations << ','
      << r.error << '\n';
  }
}

void write_tune_csv(const std::string& path, const control::TuneResult& result) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("csv: cannot write " + path);
  f << "kp,ki,mae,stable\n";
  for (const auto& p : result.table)
    f << format_double(p.kp) << ',' << format_double(p.ki) << ','
      << format_double(p.mae) << ',' << (p.stable ? 1 : 0) << '\n';
}

}  // namespace crrl::harness
