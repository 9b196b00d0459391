#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "crrl/config.hpp"
#include "crrl/harness.hpp"
#include "crrl/stability.hpp"

namespace fs = std::filesystem;
using namespace crrl;

namespace {

harness::ExperimentConfig load_config(const std::string& path,
                                      const std::vector<std::string>& overrides) {
  config::Ini ini = path.empty() ? config::Ini{} : config::Ini::parse_file(path);
  for (const auto& o : overrides) ini.apply_override(o);
  return harness::ExperimentConfig::from_ini(ini);
}

void print_summary(const std::string& label, const harness::Summary& s) {
  std::printf("%s: runin MAE %.6g rad/s, converged MAE %.6g rad/s, improvement %.2f%%\n",
              label.c_str(), s.runin_mae, s.conv_mae, 100.0 * s.improvement);
  std::printf("  dips: median %.3g, max %.3g (runin worst %.3g, count %d)\n", s.dip_median,
              s.dip_max, s.runin_worst_dip, s.dip_count);
}

void print_condition(const char* name, const stability::Condition& c) {
  if (!c.satisfiable)
    std::printf("  %-8s UNSATISFIABLE\n", name);
  else
    std::printf("  %-8s %-4s  value %.6g vs threshold %.6g\n", name, c.ok ? "ok" : "FAIL",
                c.value, c.threshold);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained residual reinforcement learning lab for a slider-crank rig"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "Experiment config file (INI)");
  app.add_option("--set", overrides, "Override config entries, section.key=value");

  // ---- tune ----
  auto* tune = app.add_subcommand("tune", "Grid-search the PI gains on the simulated plant");
  std::string tune_out = "tune.csv";
  control::GridSpec grid;
  tune->add_option("--out", tune_out, "Output CSV path");
  tune->add_option("--kp-min", grid.kp_min);
  tune->add_option("--kp-max", grid.kp_max);
  tune->add_option("--kp-step", grid.kp_step);
  tune->add_option("--ki-min", grid.ki_min);
  tune->add_option("--ki-max", grid.ki_max);
  tune->add_option("--ki-step", grid.ki_step);

  // ---- train ----
  auto* train = app.add_subcommand("train", "Run the residual-learning experiment");
  std::vector<std::uint64_t> train_seeds;
  train->add_option("--seed", train_seeds, "Seeds to run (default: config seeds)");

  // ---- baseline ----
  auto* baseline =
      app.add_subcommand("baseline", "Standalone agent pretrained on the tuned PI controller");
  std::vector<std::uint64_t> baseline_seeds;
  baseline->add_option("--seed", baseline_seeds, "Seeds to run (default: config seeds)");

  // ---- certify ----
  auto* certify = app.add_subcommand("certify", "Evaluate the closed-loop stability certificate");
  std::string cert_mode = "relative";
  double cert_beta = -1.0, cert_omega0 = -1.0, cert_alpha0 = 0.0, cert_eta = M_PI,
         cert_epsilon = 0.1, cert_lambda = -1.0;
  int cert_samples = 3600;
  std::string cert_out = "certificate.csv";
  certify->add_option("--mode", cert_mode, "absolute|relative");
  certify->add_option("--beta", cert_beta, "Tube parameter (default: config residual.beta)");
  certify->add_option("--omega0", cert_omega0, "Reference velocity bound (default: from config)");
  certify->add_option("--alpha0", cert_alpha0, "Reference acceleration bound");
  certify->add_option("--eta", cert_eta, "State-ball radius");
  certify->add_option("--epsilon", cert_epsilon, "Initial-error radius");
  certify->add_option("--lambda", cert_lambda, "Fix lambda instead of searching");
  certify->add_option("--grid", cert_samples, "Norm grid samples");
  certify->add_option("--out", cert_out, "Output CSV path");

  // ---- sweep ----
  auto* sweep = app.add_subcommand("sweep", "Run a comparison sweep over one axis");
  std::string axis = "beta";
  std::string sweep_values;
  std::string sweep_out = "sweep.csv";
  sweep->add_option("--axis", axis, "beta|mode|gains|reference");
  sweep->add_option("--values", sweep_values,
                    "Axis values: beta list '0.1,0.2'; mode list 'relative:0.2,absolute:0.075f'"
                    " (f = fraction of max base); gains 'kp:ki,...'; reference"
                    " 'constant:60,constant:90,sine:15:60'");
  sweep->add_option("--out", sweep_out, "Output CSV path");

  // ---- report ----
  auto* report = app.add_subcommand("report", "Summarize a finished run directory");
  std::string run_dir;
  report->add_option("--run-dir", run_dir, "Directory containing epochs.csv")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*tune) {
      const auto cfg = load_config(config_path, overrides);
      harness::TuneConfig tc;
      const auto res = harness::tune_pi(cfg.plant, cfg.reference, grid, cfg.dt, cfg.substeps,
                                        cfg.windup_limit, tc);
      harness::write_tune_csv(tune_out, res);
      std::printf("evaluated %zu candidates; best kp = %.3g ki = %.3g, MAE %.6g rad/s\n",
                  res.table.size(), res.best.kp, res.best.ki, res.best_mae);
      std::printf("table written to %s\n", tune_out.c_str());
    } else if (*train) {
      const auto cfg = load_config(config_path, overrides);
      const auto seeds = train_seeds.empty() ? cfg.seeds : train_seeds;
      for (const auto seed : seeds) {
        const auto run = harness::run_experiment(cfg, seed);
        const auto s = harness::summarize(run.records, cfg.runin_epochs);
        print_summary("seed " + std::to_string(seed), s);
        harness::write_summary_csv((fs::path(run.run_dir) / "summary.csv").string(), s);
        if (run.tube_violations != 0) return 2;
      }
    } else if (*baseline) {
      auto cfg = load_config(config_path, overrides);
      // Table-default hyperparameters for the standalone agent, unless the
      // config overrides them explicitly.
      config::Ini ini = config_path.empty() ? config::Ini{} : config::Ini::parse_file(config_path);
      for (const auto& o : overrides) ini.apply_override(o);
      sac::SacHyper rl = sac::SacHyper::rl_baseline_defaults();
      rl.gamma = ini.get_double("sac.gamma", rl.gamma);
      rl.lr = ini.get_double("sac.lr", rl.lr);
      rl.batch_size = cfg.sac.batch_size;
      rl.buffer_capacity = cfg.sac.buffer_capacity;
      rl.update_every = cfg.sac.update_every;
      if (ini.has("sac.actor_hidden") || ini.has("sac.critic_hidden")) {
        rl.actor_hidden = cfg.sac.actor_hidden;
        rl.critic_hidden = cfg.sac.critic_hidden;
      }
      cfg.sac = rl;
      const auto seeds = baseline_seeds.empty() ? cfg.seeds : baseline_seeds;
      for (const auto seed : seeds) {
        const auto run = harness::rl_baseline(cfg, seed);
        const auto s = harness::summarize(run.records, cfg.runin_epochs);
        std::printf("imitation MAE %.6g rad/s\n", run.imitation_mae);
        print_summary("baseline seed " + std::to_string(seed), s);
        harness::write_summary_csv((fs::path(run.run_dir) / "summary.csv").string(), s);
      }
    } else if (*certify) {
      const auto cfg = load_config(config_path, overrides);
      const auto norms = stability::compute_norms(cfg.plant, cert_eta, cert_epsilon, cert_samples);
      stability::CertificateInput in;
      in.kp = cfg.gains.kp;
      in.ki = cfg.gains.ki;
      in.beta = cert_beta >= 0 ? cert_beta : cfg.beta;
      in.omega0 = cert_omega0 >= 0 ? cert_omega0 : control::reference_max(cfg.reference);
      in.alpha0 = cert_alpha0;
      in.norms = norms;
      const auto mode =
          cert_mode == "absolute" ? residual::Mode::Absolute : residual::Mode::Relative;

      std::printf("norms: mu_M %.6g, nu_M %.6g, mu_B %.6g, mu_Lq %.6g, g0 %.6g\n", norms.mu_M,
                  norms.nu_M, norms.mu_B, norms.mu_Lq, norms.g0);

      stability::CertificateReport rep;
      double lambda_used = cert_lambda;
      if (cert_lambda > 0) {
        in.lambda = cert_lambda;
        rep = mode == residual::Mode::Absolute ? stability::check_absolute(in)
                                               : stability::check_relative(in);
      } else {
        const auto choice = stability::choose_lambda(in, mode, {});
        if (!choice.found) {
          std::printf("no certifying lambda found on the policy grid\n");
          return 2;
        }
        lambda_used = choice.lambda;
        in.lambda = choice.lambda;
        rep = choice.report;
      }
      std::printf("mode %s, beta %.6g, omega0 %.6g, lambda %.6g\n",
                  mode == residual::Mode::Absolute ? "absolute" : "relative", in.beta, in.omega0,
                  lambda_used);
      print_condition("lambda", rep.lambda_ok);
      print_condition("kp", rep.kp_ok);
      print_condition("ki", rep.ki_ok);
      std::printf("  alpha = (%.6g, %.6g, %.6g, %.6g), delta = %.6g rad/s\n", rep.alpha1,
                  rep.alpha2, rep.alpha3, rep.alpha4, rep.delta);
      std::printf("  certificate: %s\n", rep.certified() ? "PASS" : "FAIL");

      const auto beta_search =
          stability::max_safe_beta(in.kp, in.ki, norms, in.omega0, in.alpha0, {});
      if (beta_search.feasible)
        std::printf("  max certifiable beta_r = %.4f (lambda %.6g)\n", beta_search.beta_max,
                    beta_search.lambda);
      else
        std::printf("  max certifiable beta_r: none (%s)\n", beta_search.diagnostics.c_str());

      const auto th = stability::relative_beta_thresholds(in);
      std::printf("  beta_r condition crossings at lambda %.6g: %.4g (lambda), %.4g (kp), %.4g (ki)\n",
                  lambda_used, th.from_lambda, th.from_kp, th.from_ki);

      std::ofstream f(cert_out);
      f << "kp,ki,lambda,beta,omega0,alpha0,mu_M,nu_M,mu_B,mu_Lq,g0,lambda_ok,kp_ok,ki_ok,"
           "alpha1,alpha2,alpha3,alpha4,delta,certified,beta_max\n";
      f << in.kp << ',' << in.ki << ',' << lambda_used << ',' << in.beta << ',' << in.omega0
        << ',' << in.alpha0 << ',' << norms.mu_M << ',' << norms.nu_M << ',' << norms.mu_B
        << ',' << norms.mu_Lq << ',' << norms.g0 << ',' << rep.lambda_ok.ok << ','
        << rep.kp_ok.ok << ',' << rep.ki_ok.ok << ',' << rep.alpha1 << ',' << rep.alpha2 << ','
        << rep.alpha3 << ',' << rep.alpha4 << ',' << rep.delta << ',' << rep.certified() << ','
        << (beta_search.feasible ? beta_search.beta_max : 0.0) << '\n';
      std::printf("report written to %s\n", cert_out.c_str());
      if (!rep.certified()) return 2;
    } else if (*sweep) {
      const auto base = load_config(config_path, overrides);
      std::vector<harness::SweepEntry> entries;
      std::stringstream ss(sweep_values);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        harness::SweepEntry e;
        e.cfg = base;
        if (axis == "beta") {
          e.cfg.beta = std::stod(tok);
          e.label = "beta_" + tok;
        } else if (axis == "mode") {
          const auto colon = tok.find(':');
          if (colon == std::string::npos) throw std::runtime_error("mode value needs mode:beta");
          const std::string m = tok.substr(0, colon);
          std::string b = tok.substr(colon + 1);
          e.cfg.beta_is_fraction_of_max_base = !b.empty() && b.back() == 'f';
          if (e.cfg.beta_is_fraction_of_max_base) b.pop_back();
          e.cfg.mode =
              m == "absolute" ? residual::Mode::Absolute : residual::Mode::Relative;
          e.cfg.beta = std::stod(b);
          e.label = tok;
        } else if (axis == "gains") {
          const auto colon = tok.find(':');
          if (colon == std::string::npos) throw std::runtime_error("gains value needs kp:ki");
          e.cfg.gains.kp = std::stod(tok.substr(0, colon));
          e.cfg.gains.ki = std::stod(tok.substr(colon + 1));
          e.label = "kp" + tok.substr(0, colon) + "_ki" + tok.substr(colon + 1);
        } else if (axis == "reference") {
          std::vector<std::string> parts;
          std::stringstream ts(tok);
          std::string p;
          while (std::getline(ts, p, ':')) parts.push_back(p);
          if (parts[0] == "constant" && parts.size() == 2) {
            e.cfg.reference.kind = control::Reference::Kind::Constant;
            e.cfg.reference.rpm = std::stod(parts[1]);
          } else if (parts[0] == "sine" && parts.size() == 3) {
            e.cfg.reference.kind = control::Reference::Kind::SineOfAngle;
            e.cfg.reference.amplitude_rpm = std::stod(parts[1]);
            e.cfg.reference.offset_rpm = std::stod(parts[2]);
          } else {
            throw std::runtime_error("bad reference token: " + tok);
          }
          e.label = tok;
        } else {
          throw std::runtime_error("unknown axis: " + axis);
        }
        e.cfg.outdir = (fs::path(base.outdir) / e.label).string();
        entries.push_back(std::move(e));
      }
      const auto res = harness::sweep(entries);
      harness::write_sweep_csv(sweep_out, res);
      for (const auto& r : res.rows) {
        if (r.ok)
          std::printf("%-24s seed %llu: improvement %.2f%%, dip median %.3g\n", r.label.c_str(),
                      static_cast<unsigned long long>(r.seed), 100.0 * r.summary.improvement,
                      r.summary.dip_median);
        else
          std::printf("%-24s seed %llu: FAILED (%s)\n", r.label.c_str(),
                      static_cast<unsigned long long>(r.seed), r.error.c_str());
      }
      std::printf("sweep table written to %s\n", sweep_out.c_str());
      for (const auto& r : res.rows)
        if (r.ok && r.tube_violations != 0) return 2;
    } else if (*report) {
      const auto records = harness::read_epochs_csv((fs::path(run_dir) / "epochs.csv").string());
      int runin = 0;
      for (const auto& r : records)
        if (r.phase == harness::Phase::RunIn) ++runin;
      const auto s = harness::summarize(records, runin);
      print_summary(run_dir, s);
      harness::write_summary_csv((fs::path(run_dir) / "summary.csv").string(), s);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
