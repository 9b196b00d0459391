#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "crrl/sac.hpp"
#include "doctest.h"

using namespace crrl;
using sac::SacHyper;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

SacHyper small_hyper() {
  SacHyper h;
  h.actor_hidden = {16, 16};
  h.critic_hidden = {32, 32};
  h.batch_size = 32;
  h.buffer_capacity = 10000;
  return h;
}

// Overwrite the actor so it outputs exactly (mu, log_std_raw) everywhere.
void set_constant_actor(sac::Agent& agent, double mu, double log_std_raw) {
  std::fill(agent.nets.actor.begin(), agent.nets.actor.end(), 0.0);
  const std::size_t n = agent.nets.actor.size();
  agent.nets.actor[n - 2] = mu;
  agent.nets.actor[n - 1] = log_std_raw;
}

double squashed_log_density(double a, double mu, double log_std) {
  const double pre = std::atanh(a);
  const double z = (pre - mu) / std::exp(log_std);
  return -0.5 * z * z - log_std - 0.5 * kLog2Pi - std::log(1.0 - a * a + 1e-6);
}

}  // namespace

TEST_CASE("table defaults for both hyperparameter columns") {
  const SacHyper crrl_col = SacHyper::crrl_defaults();
  CHECK(crrl_col.lr == 3e-4);
  CHECK(crrl_col.gamma == 0.97);
  CHECK(crrl_col.batch_size == 256);
  CHECK(crrl_col.buffer_capacity == 1000000);
  CHECK(crrl_col.tau == 0.005);
  CHECK(crrl_col.actor_hidden == std::vector<int>{32, 32});
  CHECK(crrl_col.critic_hidden == std::vector<int>{128, 128, 128});

  const SacHyper rl_col = SacHyper::rl_baseline_defaults();
  CHECK(rl_col.lr == 1e-5);
  CHECK(rl_col.gamma == 0.9);
  CHECK(rl_col.batch_size == 256);
  CHECK(rl_col.buffer_capacity == 1000000);
  CHECK(rl_col.tau == 0.005);
  CHECK(rl_col.actor_hidden == std::vector<int>{32, 32});
  CHECK(rl_col.critic_hidden == std::vector<int>{32, 32});
}

TEST_CASE("agent construction: specs, target init, hyper validation") {
  Rng rng(1);
  const auto agent = sac::make_agent(small_hyper(), 3, 1, rng);
  CHECK(agent.nets.actor_spec.widths == std::vector<int>{3, 16, 16, 2});
  CHECK(agent.nets.critic_spec.widths == std::vector<int>{4, 32, 32, 1});
  CHECK(agent.nets.target_q1 == agent.nets.q1);
  CHECK(agent.nets.target_q2 == agent.nets.q2);
  CHECK(agent.nets.alpha() == 1.0);

  SacHyper bad = small_hyper();
  bad.gamma = 1.5;
  CHECK_THROWS(sac::make_agent(bad, 3, 1, rng));
  bad = small_hyper();
  bad.batch_size = 20000;
  CHECK_THROWS(sac::make_agent(bad, 3, 1, rng));
}

TEST_CASE("sample_action: vanishing noise gives tanh(mu)") {
  Rng rng(2);
  auto agent = sac::make_agent(small_hyper(), 3, 1, rng);
  set_constant_actor(agent, 0.7, -50.0);  // log-std clamps at -20
  const std::vector<double> f{0.1, -0.2, 0.9};
  for (int i = 0; i < 20; ++i) {
    const auto a = sac::sample_action(agent, f, rng);
    CHECK(a.action == doctest::Approx(std::tanh(0.7)).epsilon(1e-7));
  }
  CHECK(sac::mean_action(agent, f) == doctest::Approx(std::tanh(0.7)).epsilon(1e-12));
}

TEST_CASE("sample_action: log-prob matches the squashed density and normalizes") {
  Rng rng(3);
  auto agent = sac::make_agent(small_hyper(), 3, 1, rng);
  const std::vector<double> f{0.0, 0.5, -0.5};

  Rng prng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const double mu = prng.uniform(-1.0, 1.0);
    const double ls = prng.uniform(-2.3, 0.0);
    set_constant_actor(agent, mu, ls);

    // pointwise: returned log-prob equals the density at the returned action
    for (int i = 0; i < 10; ++i) {
      const auto a = sac::sample_action(agent, f, rng);
      CHECK(a.log_prob == doctest::Approx(squashed_log_density(a.action, mu, ls)).epsilon(1e-9));
    }

    // quadrature: the density integrates to one over (-1, 1)
    const double sigma = std::exp(ls);
    const int n = 4000;
    const double lo = mu - 9.0 * sigma, hi = mu + 9.0 * sigma;
    const double h = (hi - lo) / n;
    double integral = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double u = lo + i * h;
      const double a = std::tanh(u);
      const double z = (u - mu) / sigma;
      const double logp = -0.5 * z * z - ls - 0.5 * kLog2Pi - std::log(1.0 - a * a + 1e-6);
      // du-substitution: integrand over a is exp(logp); da = (1 - a^2) du
      const double w = (i == 0 || i == n) ? 0.5 : 1.0;
      integral += w * std::exp(logp) * (1.0 - a * a) * h;
    }
    CHECK(std::abs(integral - 1.0) <= 1e-3);
  }
}

TEST_CASE("sample_action: symmetric at mu = 0, strictly bounded") {
  Rng rng(4);
  auto agent = sac::make_agent(small_hyper(), 3, 1, rng);
  set_constant_actor(agent, 0.0, -1.0);
  const std::vector<double> f{0.0, 0.0, 1.0};
  const int n = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto a = sac::sample_action(agent, f, rng);
    CHECK(std::abs(a.action) <= 1.0);
    sum += a.action;
    sumsq += a.action * a.action;
  }
  const double mean = sum / n;
  const double stderr_est = std::sqrt((sumsq / n - mean * mean) / n);
  CHECK(std::abs(mean) <= 3.0 * stderr_est);
}

TEST_CASE("critic_target: terminal and gamma = 0 reduce to the reward") {
  Rng rng(5);
  SacHyper h = small_hyper();
  auto agent = sac::make_agent(h, 3, 1, rng);
  sac::ReplayBuffer buf(100, 3, 1);
  const std::vector<double> f{0.1, 0.2, 0.3};
  const double a0 = 0.4;
  buf.push(f, {&a0, 1}, 1.7, f, true);
  buf.push(f, {&a0, 1}, -0.3, f, false);

  const std::vector<std::size_t> idx{0, 1};
  const auto t1 = sac::critic_target(agent, buf, idx, rng);
  CHECK(t1[0] == 1.7);  // done: no bootstrap

  agent.hyper.gamma = 0.0;
  const auto t2 = sac::critic_target(agent, buf, idx, rng);
  CHECK(t2[0] == 1.7);
  CHECK(t2[1] == doctest::Approx(-0.3));
}

TEST_CASE("critic_target reaches the soft fixed point on a one-state loop") {
  SacHyper h = small_hyper();
  h.gamma = 0.9;
  h.critic_lr = 1e-3;
  h.actor_lr = 0.0;
  h.alpha_lr = 0.0;
  h.init_log_alpha = std::log(0.1);
  h.tau = 0.01;
  Rng rng(6);
  auto agent = sac::make_agent(h, 3, 1, rng);
  set_constant_actor(agent, 0.3, -0.7);

  const std::vector<double> f{0.1, 0.2, 0.3};
  const double a0 = 0.2;
  sac::ReplayBuffer buf(64, 3, 1);
  for (int i = 0; i < 32; ++i) buf.push(f, {&a0, 1}, 1.0, f, false);

  // oracle: y = (r - gamma alpha E[log pi]) / (1 - gamma), E by Monte Carlo
  Rng mc(7);
  double elogp = 0.0;
  const int n_mc = 200000;
  for (int i = 0; i < n_mc; ++i) {
    const double sigma = std::exp(-0.7);
    const double pre = 0.3 + sigma * mc.normal();
    const double a = std::tanh(pre);
    const double z = (pre - 0.3) / sigma;
    elogp += -0.5 * z * z - (-0.7) - 0.5 * kLog2Pi - std::log(1.0 - a * a + 1e-6);
  }
  elogp /= n_mc;
  const double alpha = 0.1;
  const double ystar = (1.0 - 0.9 * alpha * elogp) / (1.0 - 0.9);

  for (int i = 0; i < 20000; ++i) sac::update(agent, buf, rng);

  // Q should be (nearly) constant at ystar over the policy's action range
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto d = sac::sample_action(agent, f, rng);
    std::vector<double> qin{f[0], f[1], f[2], d.action};
    const auto q = nn::forward(agent.nets.critic_spec, agent.nets.q1, qin);
    worst = std::max(worst, std::abs(q[0] - ystar));
  }
  {
    std::vector<double> qin{f[0], f[1], f[2], a0};
    const auto q = nn::forward(agent.nets.critic_spec, agent.nets.q1, qin);
    worst = std::max(worst, std::abs(q[0] - ystar));
  }
  CHECK(worst <= 0.02 * std::abs(ystar) + 0.05);
}

TEST_CASE("update: zero learning rate reports losses but moves nothing") {
  SacHyper h = small_hyper();
  h.actor_lr = 0.0;
  h.critic_lr = 0.0;
  h.alpha_lr = 0.0;
  h.tau = 1e-12;  // park the targets too
  Rng rng(8);
  auto agent = sac::make_agent(h, 3, 1, rng);
  sac::ReplayBuffer buf(100, 3, 1);
  Rng env(9);
  for (int i = 0; i < 64; ++i) {
    const std::vector<double> f{env.uniform(), env.uniform(), env.uniform()};
    const double a = env.uniform(-1.0, 1.0);
    buf.push(f, {&a, 1}, env.uniform(-1.0, 0.0), f, false);
  }
  const auto actor_before = agent.nets.actor;
  const auto q1_before = agent.nets.q1;
  const double alpha_before = agent.nets.log_alpha;
  const auto rep = sac::update(agent, buf, rng);
  CHECK(std::isfinite(rep.critic1));
  CHECK(std::isfinite(rep.critic2));
  CHECK(std::isfinite(rep.actor));
  CHECK(rep.critic1 > 0.0);
  CHECK(agent.nets.actor == actor_before);
  CHECK(agent.nets.q1 == q1_before);
  CHECK(agent.nets.log_alpha == alpha_before);
}

TEST_CASE("update: critic loss is exactly zero when Q already equals the target") {
  SacHyper h = small_hyper();
  h.gamma = 0.0;
  Rng rng(10);
  auto agent = sac::make_agent(h, 3, 1, rng);
  std::fill(agent.nets.q1.begin(), agent.nets.q1.end(), 0.0);
  std::fill(agent.nets.q2.begin(), agent.nets.q2.end(), 0.0);
  agent.nets.target_q1 = agent.nets.q1;
  agent.nets.target_q2 = agent.nets.q2;
  sac::ReplayBuffer buf(100, 3, 1);
  const std::vector<double> f{0.2, 0.4, 0.6};
  const double a = 0.1;
  for (int i = 0; i < 40; ++i) buf.push(f, {&a, 1}, 0.0, f, true);
  const auto rep = sac::update(agent, buf, rng);
  CHECK(rep.critic1 == 0.0);
  CHECK(rep.critic2 == 0.0);
}

TEST_CASE("soft_update: copy, identity, geometric contraction") {
  std::vector<double> target{1.0, -2.0, 3.0};
  const std::vector<double> online{0.0, 0.5, -1.0};

  auto t1 = target;
  sac::soft_update(t1, online, 1.0);
  CHECK(t1 == online);

  auto t2 = target;
  sac::soft_update(t2, online, 0.0);
  CHECK(t2 == target);

  auto t3 = target;
  for (int i = 0; i < 4000; ++i) sac::soft_update(t3, online, 0.01);
  for (std::size_t i = 0; i < t3.size(); ++i)
    CHECK(t3[i] == doctest::Approx(online[i]).epsilon(1e-10));

  std::vector<double> wrong(2, 0.0);
  CHECK_THROWS(sac::soft_update(wrong, online, 0.5));
}

TEST_CASE("replay buffer: FIFO eviction, size-one sampling, uniformity") {
  SUBCASE("capacity two evicts the oldest") {
    sac::ReplayBuffer buf(2, 1, 1);
    const auto push = [&](double v) {
      const double f = v, a = v;
      buf.push({&f, 1}, {&a, 1}, v, {&f, 1}, false);
    };
    push(1.0);
    push(2.0);
    push(3.0);
    CHECK(buf.size() == 2);
    CHECK(buf.reward(0) == 2.0);
    CHECK(buf.reward(1) == 3.0);
  }

  SUBCASE("single-element buffer returns that element") {
    sac::ReplayBuffer buf(8, 1, 1);
    const double f = 0.5, a = -0.25;
    buf.push({&f, 1}, {&a, 1}, 0.75, {&f, 1}, true);
    Rng rng(11);
    for (int i = 0; i < 10; ++i) {
      const auto idx = rng.index(buf.size());
      CHECK(idx == 0);
      CHECK(buf.action(idx)[0] == -0.25);
      CHECK(buf.done(idx));
    }
  }

  SUBCASE("uniform sampling passes a chi-square check") {
    const int k = 16, n = 16000;
    sac::ReplayBuffer buf(k, 1, 1);
    for (int i = 0; i < k; ++i) {
      const double f = i, a = 0.0;
      buf.push({&f, 1}, {&a, 1}, i, {&f, 1}, false);
    }
    Rng rng(12);
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) ++counts[rng.index(buf.size())];
    const double expected = static_cast<double>(n) / k;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 37.7);  // chi-square df 15, p = 0.001
    CHECK(chi2 > 0.0);
  }

  SUBCASE("dimension mismatches are rejected") {
    sac::ReplayBuffer buf(4, 2, 1);
    const double f1 = 0.0;
    const double a = 0.0;
    CHECK_THROWS(buf.push({&f1, 1}, {&a, 1}, 0.0, {&f1, 1}, false));
  }
}

namespace {

// One-step bandit: reward -(a - target)^2, episodes of length one.
sac::Agent train_bandit(const SacHyper& h, std::uint64_t seed, int steps,
                        std::vector<double>* loss_trace = nullptr) {
  Rng master(seed);
  Rng rng_init = master.fork("init");
  Rng rng_act = master.fork("act");
  Rng rng_train = master.fork("train");
  auto agent = sac::make_agent(h, 3, 1, rng_init);
  sac::ReplayBuffer buf(h.buffer_capacity, 3, 1);
  const std::vector<double> f{0.0, 0.0, 1.0};
  for (int i = 0; i < steps; ++i) {
    const auto a = sac::sample_action(agent, f, rng_act);
    const double r = -(a.action - 0.5) * (a.action - 0.5);
    buf.push(f, {&a.action, 1}, r, f, true);
    if (buf.size() >= static_cast<std::size_t>(h.batch_size)) {
      const auto rep = sac::update(agent, buf, rng_train);
      if (loss_trace) {
        loss_trace->push_back(rep.critic1);
        loss_trace->push_back(rep.actor);
        loss_trace->push_back(rep.alpha);
      }
    }
  }
  return agent;
}

}  // namespace

TEST_CASE("bandit: actor recovers the optimum and entropy approaches its target") {
  SacHyper h = small_hyper();
  h.lr = 1e-3;
  h.batch_size = 64;
  const auto agent = train_bandit(h, 42, 5000);
  const std::vector<double> f{0.0, 0.0, 1.0};
  CHECK(std::abs(sac::mean_action(agent, f) - 0.5) <= 0.05);

  Rng rng(13);
  double entropy = 0.0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) entropy += -sac::sample_action(agent, f, rng).log_prob;
  entropy /= n;
  CHECK(std::abs(entropy - h.target_entropy) <= 0.5);
}

TEST_CASE("training trace is bit-identical across reruns with one seed") {
  SacHyper h = small_hyper();
  h.lr = 1e-3;
  h.batch_size = 32;
  std::vector<double> trace1, trace2, trace3;
  train_bandit(h, 7, 300, &trace1);
  train_bandit(h, 7, 300, &trace2);
  train_bandit(h, 8, 300, &trace3);
  CHECK(trace1 == trace2);
  CHECK(trace1 != trace3);
}

TEST_CASE("update keeps every parameter finite and targets blended") {
  SacHyper h = small_hyper();
  h.lr = 3e-3;
  std::vector<double> trace;
  const auto agent = train_bandit(h, 3, 500);
  for (double v : agent.nets.actor) CHECK(std::isfinite(v));
  for (double v : agent.nets.q1) CHECK(std::isfinite(v));
  for (double v : agent.nets.q2) CHECK(std::isfinite(v));
  for (double v : agent.nets.target_q1) CHECK(std::isfinite(v));
  CHECK(std::isfinite(agent.nets.log_alpha));
}

TEST_CASE("checkpoint round-trip preserves the agent bit-exactly") {
  SacHyper h = small_hyper();
  h.lr = 1e-3;
  const auto agent = train_bandit(h, 5, 200);
  std::stringstream buf;
  sac::save_checkpoint(buf, agent);
  Rng rng(14);
  auto other = sac::make_agent(h, 3, 1, rng);
  sac::load_checkpoint(buf, other);
  CHECK(other.nets.actor == agent.nets.actor);
  CHECK(other.nets.q1 == agent.nets.q1);
  CHECK(other.nets.q2 == agent.nets.q2);
  CHECK(other.nets.target_q1 == agent.nets.target_q1);
  CHECK(other.nets.target_q2 == agent.nets.target_q2);
  CHECK(other.nets.log_alpha == agent.nets.log_alpha);
}
