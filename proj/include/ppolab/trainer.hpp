#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "ppolab/envs.hpp"
#include "ppolab/policy.hpp"
#include "ppolab/rng.hpp"
#include "ppolab/surrogate.hpp"

namespace ppolab {

struct NoRewardScaling {};
struct ConstantRewardScaling {
  double factor = 1.0;
};
/// Divide rewards by the running std of discounted returns.
struct ReturnStdScaling {
  double gamma = 0.99;
};
using RewardScaling = std::variant<NoRewardScaling, ConstantRewardScaling, ReturnStdScaling>;

enum class Baseline { kBatchMean, kZero };

struct GaeConfig {
  double gamma = 0.99;
  double lambda = 0.95;
};

enum class Optimizer { kSgd, kAdam };

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  std::size_t iterations = 50;
  std::size_t timesteps_per_iter = 512;
  std::size_t minibatch_size = 32;
  std::size_t epochs = 10;
  double learning_rate = 0.1;
  Optimizer optimizer = Optimizer::kSgd;
  AdamConfig adam;
  SurrogateSpec surrogate = ClipObjective{0.2};
  bool advantage_normalization = false;
  RewardScaling reward_scaling = NoRewardScaling{};
  Baseline baseline = Baseline::kBatchMean;
  std::optional<GaeConfig> gae;
  std::uint64_t seed = 0;
  /// Points of the policy density grid stored per iteration; 0 disables it.
  std::size_t density_grid_points = 0;

  /// Throws InvalidParameter on a configuration that cannot run.
  void validate() const;
  std::size_t gradient_steps_per_iteration() const { return epochs * (timesteps_per_iter / minibatch_size); }
};

struct IterationRecord {
  std::size_t iteration = 0;  // 1-based
  double reward_mean = 0.0;
  double reward_std = 0.0;
  /// Exact expected mean reward of the updated policy.
  double probe_reward = 0.0;
  double kl_forward = 0.0;
  double kl_reverse = 0.0;
  double ratio_min = 1.0;
  double ratio_max = 1.0;
  double ratio_mean = 1.0;
  /// Fraction of samples whose clipped gradient is masked out; NaN unless clipping.
  double clip_inactive_fraction = 0.0;
  /// Std of advantages before normalization.
  double advantage_std = 0.0;
  /// Probability of the optimal action (discrete environments only, else NaN).
  double optimal_probability = 0.0;
  PolicyParams policy;
  std::vector<double> density;
  bool diverged = false;
};

struct TrainResult {
  std::vector<IterationRecord> records;
  PolicyParams final_params;
  bool diverged = false;
};

// Running std of discounted returns. The return accumulator resets at
// episode ends; every bandit pull is a one-step episode.
class ReturnScaler {
 public:
  explicit ReturnScaler(double gamma = 0.99) : gamma_(gamma) {}

  double scale(double reward, bool episode_end);
  double return_std() const;
  std::size_t count() const { return count_; }

 private:
  double gamma_;
  double running_return_ = 0.0;
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// First and second moment estimates; persists across iterations of a run.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t steps = 0;
};

/// Mutable state carried between iterations of one run.
struct TrainerState {
  ReturnScaler scaler;
  AdamState adam;
};

/// Ascent direction for one step: lr * grad for SGD, the bias-corrected Adam step otherwise.
std::vector<double> optimizer_step(const TrainConfig& config, std::span<const double> grad, AdamState& state);

/// Applies a reward scaling scheme; `dones` marks episode ends (empty = every step ends one).
std::vector<double> scale_rewards(std::span<const double> rewards, const std::vector<bool>& dones,
                                  const RewardScaling& scheme, ReturnScaler& running_state);

/// (A - mean) / max(std, 1e-8) with population std.
void normalize_advantages(std::span<double> advantages);

/// Generalized advantage estimates; values[t] is V(s_t), and the value after a
/// terminal step is taken as 0.
std::vector<double> compute_gae(std::span<const double> rewards, std::span<const double> values,
                                const std::vector<bool>& dones, double gamma, double lambda);

/// Discounted returns-to-go, reset at episode ends.
std::vector<double> discounted_returns(std::span<const double> rewards, const std::vector<bool>& dones, double gamma);

/// Per-state mean of the observed discounted returns-to-go.
std::vector<double> empirical_state_values(std::span<const std::size_t> states, std::span<const double> rewards,
                                           const std::vector<bool>& dones, double gamma, std::size_t num_states);

/// Bandit path: scaled reward minus baseline, then optional normalization.
/// Fills batch.advantages from batch.rewards.
void compute_advantages(SampleBatch& batch, const TrainConfig& config, ReturnScaler& running_state);

/// Multi-step path on a chain rollout: scaling, GAE against the empirical
/// state values, optional normalization.
std::vector<double> compute_chain_advantages(const ChainMDP& mdp, const ChainMDP::Rollout& rollout,
                                             const TrainConfig& config, ReturnScaler& running_state);

/// Samples n actions from the policy; rewards use the clipped action and the
/// cached old log-probabilities use the unclipped one.
SampleBatch collect_batch(const Environment& env, const PolicyParams& params, Rng& rng, std::size_t n);

struct IterationOutcome {
  PolicyParams params;
  IterationRecord record;
  /// The collected samples with advantages filled in.
  SampleBatch batch;
};

/// One outer PPO iteration: snapshot, collect, advantages, epochs of minibatch SGD.
IterationOutcome ppo_iteration(const Environment& env, const PolicyParams& params, const TrainConfig& config,
                               Rng& rng, TrainerState& state, std::size_t iteration_index = 1);

/// K iterations from init_params; deterministic given config.seed.
TrainResult train(const Environment& env, const PolicyParams& init_params, const TrainConfig& config);

}  // namespace ppolab
