#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "crrl/nn.hpp"
#include "crrl/rng.hpp"

namespace crrl::sac {

struct SacHyper {
  double gamma = 0.97;
  double lr = 3e-4;  // all networks
  int batch_size = 256;
  std::size_t buffer_capacity = 1'000'000;
  double tau = 0.005;
  double target_entropy = -1.0;  // -(action dim)
  std::vector<int> actor_hidden = {32, 32};
  std::vector<int> critic_hidden = {128, 128, 128};
  double init_log_alpha = 0.0;
  double log_std_min = -20.0, log_std_max = 2.0;
  int update_every = 1;  // environment steps per gradient update

  // Per-network overrides for tests/ablations; negative means "use lr".
  double actor_lr = -1.0, critic_lr = -1.0, alpha_lr = -1.0;

  void validate() const;

  /// Hyperparameters used by the residual agent experiments.
  static SacHyper crrl_defaults() { return SacHyper{}; }

  /// Hyperparameters used by the standalone agent baseline
  /// (smaller critics, slower learning, shorter horizon).
  static SacHyper rl_baseline_defaults();
};

/// Flat, fixed-capacity FIFO ring of transitions with uniform
/// with-replacement sampling. `scale`/`next_scale` carry the per-state
/// multiplier that maps a raw policy output into the stored-action space.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, int feature_dim, int action_dim = 1);

  void push(std::span<const double> features, std::span<const double> action,
            double reward, std::span<const double> next_features, bool done,
            double scale = 1.0, double next_scale = 1.0);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  int feature_dim() const { return feature_dim_; }
  int action_dim() const { return action_dim_; }

  std::span<const double> features(std::size_t i) const;
  std::span<const double> action(std::size_t i) const;
  std::span<const double> next_features(std::size_t i) const;
  double reward(std::size_t i) const { return reward_[slot(i)]; }
  bool done(std::size_t i) const { return done_[slot(i)] != 0; }
  double scale(std::size_t i) const { return scale_[slot(i)]; }
  double next_scale(std::size_t i) const { return next_scale_[slot(i)]; }

 private:
  // Index i counts from the oldest stored transition.
  std::size_t slot(std::size_t i) const { return (head_ + i) % capacity_; }

  std::size_t capacity_;
  int feature_dim_, action_dim_;
  std::size_t size_ = 0, head_ = 0, write_ = 0;
  std::vector<double> feat_, next_feat_, act_, reward_, scale_, next_scale_;
  std::vector<unsigned char> done_;
};

struct Networks {
  nn::MlpSpec actor_spec;   // outputs [mu..., log_std...]
  nn::MlpSpec critic_spec;  // input [features..., action...] -> scalar Q
  std::vector<double> actor, q1, q2, target_q1, target_q2;
  double log_alpha = 0.0;

  double alpha() const;
};

struct ActionSample {
  double action;    // tanh-squashed sample in [-1, 1]
  double log_prob;  // Gaussian log-density with the tanh change-of-variables term
};

struct LossReport {
  double critic1 = 0, critic2 = 0, actor = 0, alpha_loss = 0;
  double alpha = 0;
  double mean_entropy = 0;  // MC estimate, -mean(log_prob) over the update batch
};

/// The trainer-owned bundle: networks plus per-network Adam state.
struct Agent {
  SacHyper hyper;
  Networks nets;
  nn::AdamState adam_actor, adam_q1, adam_q2, adam_alpha;
  long updates_done = 0;
};

Agent make_agent(const SacHyper& hyper, int feature_dim, int action_dim, Rng& rng);

/// Draw an action from the squashed-Gaussian policy (action dim 1).
ActionSample sample_action(const Agent& agent, std::span<const double> features, Rng& rng);

/// Deterministic policy mean, tanh(mu).
double mean_action(const Agent& agent, std::span<const double> features);

/// Soft Bellman targets y = r + gamma (1-done) (min Q̄(s',a') - alpha log pi(a'|s'))
/// with a' freshly sampled; exposed for the fixed-point tests.
std::vector<double> critic_target(const Agent& agent, const ReplayBuffer& buffer,
                                  std::span<const std::size_t> indices, Rng& rng);

/// One gradient step on each of critics, actor and temperature, then a
/// Polyak update of the targets. Requires buffer.size() >= batch_size.
LossReport update(Agent& agent, const ReplayBuffer& buffer, Rng& rng);

/// target <- (1 - tau) target + tau online, elementwise.
void soft_update(std::span<double> target, std::span<const double> online, double tau);

void save_checkpoint(std::ostream& out, const Agent& agent);
void load_checkpoint(std::istream& in, Agent& agent);

}  // namespace crrl::sac
