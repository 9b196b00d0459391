#include "crrl/sac.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace crrl::sac {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kSquashEps = 1e-6;

double clamp(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw std::runtime_error(std::string("sac: non-finite ") + what);
}

}  // namespace

void SacHyper::validate() const {
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("sac: gamma must be in [0, 1]");
  if (!(tau > 0.0) || tau > 1.0) throw std::invalid_argument("sac: tau must be in (0, 1]");
  if (batch_size <= 0) throw std::invalid_argument("sac: batch_size must be > 0");
  if (static_cast<std::size_t>(batch_size) > buffer_capacity)
    throw std::invalid_argument("sac: batch_size exceeds buffer capacity");
  if (update_every <= 0) throw std::invalid_argument("sac: update_every must be > 0");
}

SacHyper SacHyper::rl_baseline_defaults() {
  SacHyper h;
  h.lr = 1e-5;
  h.gamma = 0.9;
  h.actor_hidden = {32, 32};
  h.critic_hidden = {32, 32};
  return h;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, int feature_dim, int action_dim)
    : capacity_(capacity), feature_dim_(feature_dim), action_dim_(action_dim) {
  if (capacity == 0) throw std::invalid_argument("buffer: capacity must be > 0");
  feat_.resize(capacity * feature_dim);
  next_feat_.resize(capacity * feature_dim);
  act_.resize(capacity * action_dim);
  reward_.resize(capacity);
  scale_.resize(capacity);
  next_scale_.resize(capacity);
  done_.resize(capacity);
}

void ReplayBuffer::push(std::span<const double> features, std::span<const double> action,
                        double reward, std::span<const double> next_features, bool done,
                        double scale, double next_scale) {
  if (static_cast<int>(features.size()) != feature_dim_ ||
      static_cast<int>(next_features.size()) != feature_dim_ ||
      static_cast<int>(action.size()) != action_dim_)
    throw std::invalid_argument("buffer: dimension mismatch");
  if (!std::isfinite(reward)) throw std::invalid_argument("buffer: non-finite reward");

  std::copy(features.begin(), features.end(), feat_.begin() + write_ * feature_dim_);
  std::copy(next_features.begin(), next_features.end(),
            next_feat_.begin() + write_ * feature_dim_);
  std::copy(action.begin(), action.end(), act_.begin() + write_ * action_dim_);
  reward_[write_] = reward;
  scale_[write_] = scale;
  next_scale_[write_] = next_scale;
  done_[write_] = done ? 1 : 0;

  write_ = (write_ + 1) % capacity_;
  if (size_ < capacity_)
    ++size_;
  else
    head_ = (head_ + 1) % capacity_;  // FIFO eviction of the oldest entry
}

std::span<const double> ReplayBuffer::features(std::size_t i) const {
  return {feat_.data() + slot(i) * feature_dim_, static_cast<std::size_t>(feature_dim_)};
}
std::span<const double> ReplayBuffer::action(std::size_t i) const {
  return {act_.data() + slot(i) * action_dim_, static_cast<std::size_t>(action_dim_)};
}
std::span<const double> ReplayBuffer::next_features(std::size_t i) const {
  return {next_feat_.data() + slot(i) * feature_dim_, static_cast<std::size_t>(feature_dim_)};
}

double Networks::alpha() const { return std::exp(log_alpha); }

Agent make_agent(const SacHyper& hyper, int feature_dim, int action_dim, Rng& rng) {
  hyper.validate();
  Agent a;
  a.hyper = hyper;

  a.nets.actor_spec.widths.push_back(feature_dim);
  for (int w : hyper.actor_hidden) a.nets.actor_spec.widths.push_back(w);
  a.nets.actor_spec.widths.push_back(2 * action_dim);  // mean and log-std heads

  a.nets.critic_spec.widths.push_back(feature_dim + action_dim);
  for (int w : hyper.critic_hidden) a.nets.critic_spec.widths.push_back(w);
  a.nets.critic_spec.widths.push_back(1);

  a.nets.actor = nn::init_params(a.nets.actor_spec, rng);
  a.nets.q1 = nn::init_params(a.nets.critic_spec, rng);
  a.nets.q2 = nn::init_params(a.nets.critic_spec, rng);
  a.nets.target_q1 = a.nets.q1;
  a.nets.target_q2 = a.nets.q2;
  a.nets.log_alpha = hyper.init_log_alpha;

  const double actor_lr = hyper.actor_lr >= 0.0 ? hyper.actor_lr : hyper.lr;
  const double critic_lr = hyper.critic_lr >= 0.0 ? hyper.critic_lr : hyper.lr;
  const double alpha_lr = hyper.alpha_lr >= 0.0 ? hyper.alpha_lr : hyper.lr;
  a.adam_actor = nn::AdamState(a.nets.actor.size(), actor_lr);
  a.adam_q1 = nn::AdamState(a.nets.q1.size(), critic_lr);
  a.adam_q2 = nn::AdamState(a.nets.q2.size(), critic_lr);
  a.adam_alpha = nn::AdamState(1, alpha_lr);
  return a;
}

namespace {

struct PolicyDraw {
  double mu, log_std_raw, log_std, std, z, pre_tanh, action, log_prob;
  bool clamped;  // log-std hit its clamp, so its gradient is masked
};

PolicyDraw draw_policy(const Agent& agent, std::span<const double> features, Rng& rng,
                       nn::Workspace* ws) {
  thread_local nn::Workspace local;
  nn::Workspace& w = ws ? *ws : local;
  nn::forward_cached(agent.nets.actor_spec, agent.nets.actor, features, w);
  const auto& out = w.acts.back();

  PolicyDraw d;
  d.mu = out[0];
  d.log_std_raw = out[1];
  d.log_std = clamp(d.log_std_raw, agent.hyper.log_std_min, agent.hyper.log_std_max);
  d.clamped = d.log_std != d.log_std_raw;
  d.std = std::exp(d.log_std);
  d.z = rng.normal();
  d.pre_tanh = d.mu + d.std * d.z;
  d.action = std::tanh(d.pre_tanh);
  // log N(pre; mu, std) - log(1 - a^2 + eps)
  d.log_prob = -0.5 * d.z * d.z - d.log_std - 0.5 * kLog2Pi -
               std::log(1.0 - d.action * d.action + kSquashEps);
  return d;
}

}  // namespace

ActionSample sample_action(const Agent& agent, std::span<const double> features, Rng& rng) {
  const PolicyDraw d = draw_policy(agent, features, rng, nullptr);
  return {d.action, d.log_prob};
}

double mean_action(const Agent& agent, std::span<const double> features) {
  const auto out = nn::forward(agent.nets.actor_spec, agent.nets.actor, features);
  return std::tanh(out[0]);
}

std::vector<double> critic_target(const Agent& agent, const ReplayBuffer& buffer,
                                  std::span<const std::size_t> indices, Rng& rng) {
  const double alpha = agent.nets.alpha();
  std::vector<double> targets(indices.size());
  thread_local std::vector<double> qin;
  const int fdim = buffer.feature_dim();
  qin.resize(fdim + 1);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::size_t i = indices[b];
    const double r = buffer.reward(i);
    if (buffer.done(i)) {
      targets[b] = r;
      continue;
    }
    const auto nf = buffer.next_features(i);
    const PolicyDraw d = draw_policy(agent, nf, rng, nullptr);
    std::copy(nf.begin(), nf.end(), qin.begin());
    qin[fdim] = buffer.next_scale(i) * d.action;
    double q1, q2;
    nn::forward(agent.nets.critic_spec, agent.nets.target_q1, qin, {&q1, 1});
    nn::forward(agent.nets.critic_spec, agent.nets.target_q2, qin, {&q2, 1});
    targets[b] = r + agent.hyper.gamma * (std::min(q1, q2) - alpha * d.log_prob);
  }
  return targets;
}

void soft_update(std::span<double> target, std::span<const double> online, double tau) {
  if (target.size() != online.size()) throw std::invalid_argument("soft_update: size mismatch");
  for (std::size_t i = 0; i < target.size(); ++i)
    target[i] = (1.0 - tau) * target[i] + tau * online[i];
}

LossReport update(Agent& agent, const ReplayBuffer& buffer, Rng& rng) {
  const auto& hy = agent.hyper;
  const int B = hy.batch_size;
  if (buffer.size() < static_cast<std::size_t>(B))
    throw std::runtime_error("sac: buffer smaller than batch size");
  const int fdim = buffer.feature_dim();
  const int qin_dim = fdim + 1;

  thread_local std::vector<std::size_t> idx;
  idx.resize(B);
  for (int b = 0; b < B; ++b) idx[b] = rng.index(buffer.size());

  const std::vector<double> targets = critic_target(agent, buffer, idx, rng);

  LossReport report;
  report.alpha = agent.nets.alpha();

  // Critic regression toward the soft Bellman targets.
  thread_local std::vector<double> grad, qin;
  thread_local nn::Workspace ws;
  qin.resize(qin_dim);
  for (int which = 0; which < 2; ++which) {
    auto& params = which == 0 ? agent.nets.q1 : agent.nets.q2;
    auto& adam = which == 0 ? agent.adam_q1 : agent.adam_q2;
    grad.assign(params.size(), 0.0);
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
      const std::size_t i = idx[b];
      const auto f = buffer.features(i);
      std::copy(f.begin(), f.end(), qin.begin());
      qin[fdim] = buffer.action(i)[0];
      nn::forward_cached(agent.nets.critic_spec, params, qin, ws);
      const double q = ws.acts.back()[0];
      const double err = q - targets[b];
      loss += err * err;
      const double d = 2.0 * err / B;
      nn::backward(agent.nets.critic_spec, params, ws, {&d, 1}, grad);
    }
    loss /= B;
    if (!std::isfinite(loss)) throw std::runtime_error("sac: non-finite critic loss");
    (which == 0 ? report.critic1 : report.critic2) = loss;
    nn::adam_step(params, grad, adam);
  }

  // Actor: minimize mean(alpha log pi - min Q), reparameterized.
  thread_local std::vector<double> actor_grad, dqin;
  thread_local nn::Workspace actor_ws;
  actor_grad.assign(agent.nets.actor.size(), 0.0);
  dqin.resize(qin_dim);
  const double alpha = agent.nets.alpha();
  double actor_loss = 0.0, logp_sum = 0.0;
  for (int b = 0; b < B; ++b) {
    const std::size_t i = idx[b];
    const auto f = buffer.features(i);
    const PolicyDraw d = draw_policy(agent, f, rng, &actor_ws);
    const double scale = buffer.scale(i);
    std::copy(f.begin(), f.end(), qin.begin());
    qin[fdim] = scale * d.action;

    double q1;
    nn::forward(agent.nets.critic_spec, agent.nets.q1, qin, {&q1, 1});
    nn::forward_cached(agent.nets.critic_spec, agent.nets.q2, qin, ws);
    double qmin;
    const std::vector<double>* qparams;
    if (q1 <= ws.acts.back()[0]) {
      qmin = q1;
      qparams = &agent.nets.q1;
      nn::forward_cached(agent.nets.critic_spec, agent.nets.q1, qin, ws);
    } else {
      qmin = ws.acts.back()[0];
      qparams = &agent.nets.q2;
    }
    actor_loss += alpha * d.log_prob - qmin;
    logp_sum += d.log_prob;

    const double done_grad = 1.0;
    nn::backward(agent.nets.critic_spec, *qparams, ws, {&done_grad, 1}, {}, dqin);
    const double dq_da = dqin[fdim] * scale;  // dQ/d(pi_out)

    const double sech2 = 1.0 - d.action * d.action;
    const double corr = 2.0 * d.action / (sech2 + kSquashEps);
    // d log_prob / d mu and / d log_std with z held fixed (reparameterization)
    const double dlp_dmu = corr * sech2;
    const double dlp_dls = -1.0 + corr * sech2 * d.std * d.z;
    const double da_dmu = sech2;
    const double da_dls = sech2 * d.std * d.z;

    double g_mu = (alpha * dlp_dmu - dq_da * da_dmu) / B;
    double g_ls = (alpha * dlp_dls - dq_da * da_dls) / B;
    if (d.clamped) g_ls = 0.0;
    const double cot[2] = {g_mu, g_ls};
    nn::backward(agent.nets.actor_spec, agent.nets.actor, actor_ws, cot, actor_grad);
  }
  actor_loss /= B;
  if (!std::isfinite(actor_loss)) throw std::runtime_error("sac: non-finite actor loss");
  report.actor = actor_loss;
  report.mean_entropy = -logp_sum / B;
  nn::adam_step(agent.nets.actor, actor_grad, agent.adam_actor);

  // Temperature: L = -log_alpha * mean(log pi + target entropy).
  const double mean_logp = logp_sum / B;
  report.alpha_loss = -agent.nets.log_alpha * (mean_logp + hy.target_entropy);
  const double dalpha = -(mean_logp + hy.target_entropy);
  nn::adam_step({&agent.nets.log_alpha, 1}, {&dalpha, 1}, agent.adam_alpha);
  report.alpha = agent.nets.alpha();

  soft_update(agent.nets.target_q1, agent.nets.q1, hy.tau);
  soft_update(agent.nets.target_q2, agent.nets.q2, hy.tau);

  check_finite(agent.nets.actor, "actor parameters");
  check_finite(agent.nets.q1, "critic-1 parameters");
  check_finite(agent.nets.q2, "critic-2 parameters");
  if (!std::isfinite(agent.nets.log_alpha)) throw std::runtime_error("sac: non-finite log alpha");

  agent.updates_done += 1;
  return report;
}

namespace {
constexpr char kCkptMagic[8] = {'C', 'R', 'R', 'L', 'C', 'K', '0', '1'};
}

void save_checkpoint(std::ostream& out, const Agent& agent) {
  out.write(kCkptMagic, sizeof(kCkptMagic));
  nn::save_params(out, agent.nets.actor_spec, agent.nets.actor);
  nn::save_params(out, agent.nets.critic_spec, agent.nets.q1);
  nn::save_params(out, agent.nets.critic_spec, agent.nets.q2);
  nn::save_params(out, agent.nets.critic_spec, agent.nets.target_q1);
  nn::save_params(out, agent.nets.critic_spec, agent.nets.target_q2);
  out.write(reinterpret_cast<const char*>(&agent.nets.log_alpha), sizeof(double));
  if (!out) throw std::runtime_error("sac: checkpoint write failed");
}

void load_checkpoint(std::istream& in, Agent& agent) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
    throw std::runtime_error("sac: bad checkpoint header");
  nn::MlpSpec cs;
  nn::load_params(in, agent.nets.actor_spec, agent.nets.actor);
  nn::load_params(in, cs, agent.nets.q1);
  nn::load_params(in, agent.nets.critic_spec, agent.nets.q2);
  nn::load_params(in, cs, agent.nets.target_q1);
  nn::load_params(in, cs, agent.nets.target_q2);
  in.read(reinterpret_cast<char*>(&agent.nets.log_alpha), sizeof(double));
  if (!in) throw std::runtime_error("sac: checkpoint read failed");
}

}  // namespace crrl::sac
