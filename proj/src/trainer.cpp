#include "ppolab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ppolab/error.hpp"

namespace ppolab {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr double kStdFloor = 1e-8;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_std(std::span<const double> v, double mean) {
  if (v.empty()) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

bool params_usable(const PolicyParams& params) {
  if (!all_finite(params)) return false;
  try {
    (void)realize(params);
  } catch (const InvalidParameter&) {
    return false;
  }
  return true;
}

std::vector<double> density_grid(const Environment& env, const Distribution& dist, std::size_t points) {
  if (points == 0) return {};
  const auto [lo, hi] = bounds(env);
  if (is_discrete(env)) return std::get<Categorical>(dist).probs;
  std::vector<double> out;
  out.reserve(points);
  for (double a : linear_grid(lo, hi, points)) out.push_back(std::exp(log_prob(dist, a)));
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (iterations == 0) throw InvalidParameter("TrainConfig: iterations must be >= 1");
  if (timesteps_per_iter == 0 || minibatch_size == 0) throw InvalidParameter("TrainConfig: empty batch");
  if (timesteps_per_iter % minibatch_size != 0) {
    throw InvalidParameter("TrainConfig: timesteps_per_iter must be divisible by minibatch_size");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidParameter("TrainConfig: learning_rate must be finite and non-negative");
  }
  ppolab::validate(surrogate);
  if (const auto* c = std::get_if<ConstantRewardScaling>(&reward_scaling); c && !(c->factor > 0.0)) {
    throw InvalidParameter("TrainConfig: constant reward scale must be positive");
  }
  if (gae) {
    if (gae->gamma < 0.0 || gae->gamma > 1.0 || gae->lambda < 0.0 || gae->lambda > 1.0) {
      throw InvalidParameter("TrainConfig: GAE gamma and lambda must lie in [0, 1]");
    }
  }
}

double ReturnScaler::scale(double reward, bool episode_end) {
  running_return_ = gamma_ * running_return_ + reward;
  ++count_;
  const double delta = running_return_ - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta * (running_return_ - mean_);
  if (episode_end) running_return_ = 0.0;
  return reward / (return_std() + kStdFloor);
}

double ReturnScaler::return_std() const {
  if (count_ < 2) return 0.0;
  return std::sqrt(m2_ / static_cast<double>(count_ - 1));
}

std::vector<double> scale_rewards(std::span<const double> rewards, const std::vector<bool>& dones,
                                  const RewardScaling& scheme, ReturnScaler& running_state) {
  if (!dones.empty() && dones.size() != rewards.size()) throw InvalidParameter("scale_rewards: size mismatch");
  std::vector<double> out(rewards.begin(), rewards.end());
  std::visit(Overloaded{
                 [](const NoRewardScaling&) {},
                 [&](const ConstantRewardScaling& c) {
                   for (double& r : out) r *= c.factor;
                 },
                 [&](const ReturnStdScaling&) {
                   for (std::size_t i = 0; i < out.size(); ++i) {
                     out[i] = running_state.scale(rewards[i], dones.empty() ? true : dones[i]);
                   }
                 },
             },
             scheme);
  return out;
}

void normalize_advantages(std::span<double> advantages) {
  const double mean = mean_of(advantages);
  const double sd = std::max(population_std(advantages, mean), kStdFloor);
  for (double& a : advantages) a = (a - mean) / sd;
}

std::vector<double> compute_gae(std::span<const double> rewards, std::span<const double> values,
                                const std::vector<bool>& dones, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw InvalidParameter("compute_gae: size mismatch");
  std::vector<double> adv(n);
  double running = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const bool terminal = dones[t] || t + 1 == n;
    const double next_value = terminal ? 0.0 : values[t + 1];
    const double delta = rewards[t] + gamma * next_value - values[t];
    running = delta + (terminal ? 0.0 : gamma * lambda * running);
    adv[t] = running;
  }
  return adv;
}

std::vector<double> discounted_returns(std::span<const double> rewards, const std::vector<bool>& dones, double gamma) {
  if (dones.size() != rewards.size()) throw InvalidParameter("discounted_returns: size mismatch");
  std::vector<double> out(rewards.size());
  double running = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    if (dones[t]) running = 0.0;
    running = rewards[t] + gamma * running;
    out[t] = running;
  }
  return out;
}

std::vector<double> empirical_state_values(std::span<const std::size_t> states, std::span<const double> rewards,
                                           const std::vector<bool>& dones, double gamma, std::size_t num_states) {
  if (states.size() != rewards.size()) throw InvalidParameter("empirical_state_values: size mismatch");
  const auto returns = discounted_returns(rewards, dones, gamma);
  std::vector<double> sums(num_states, 0.0);
  std::vector<std::size_t> counts(num_states, 0);
  for (std::size_t t = 0; t < states.size(); ++t) {
    sums.at(states[t]) += returns[t];
    ++counts[states[t]];
  }
  for (std::size_t s = 0; s < num_states; ++s) {
    if (counts[s] > 0) sums[s] /= static_cast<double>(counts[s]);
  }
  return sums;
}

void compute_advantages(SampleBatch& batch, const TrainConfig& config, ReturnScaler& running_state) {
  if (batch.rewards.empty()) throw InvalidParameter("compute_advantages: empty batch");
  auto scaled = scale_rewards(batch.rewards, {}, config.reward_scaling, running_state);
  const double baseline = config.baseline == Baseline::kBatchMean ? mean_of(scaled) : 0.0;
  for (double& r : scaled) r -= baseline;
  if (config.advantage_normalization) normalize_advantages(scaled);
  batch.advantages = std::move(scaled);
}

std::vector<double> compute_chain_advantages(const ChainMDP& mdp, const ChainMDP::Rollout& rollout,
                                             const TrainConfig& config, ReturnScaler& running_state) {
  if (rollout.rewards.empty()) throw InvalidParameter("compute_chain_advantages: empty rollout");
  const std::vector<bool>& dones = rollout.dones;
  const auto scaled = scale_rewards(rollout.rewards, dones, config.reward_scaling, running_state);
  const GaeConfig gae = config.gae.value_or(GaeConfig{mdp.gamma, 1.0});
  const auto state_values = empirical_state_values(rollout.states, scaled, dones, gae.gamma, mdp.states);
  std::vector<double> values(rollout.states.size());
  for (std::size_t t = 0; t < values.size(); ++t) values[t] = state_values[rollout.states[t]];
  auto adv = compute_gae(scaled, values, dones, gae.gamma, gae.lambda);
  if (config.advantage_normalization) normalize_advantages(adv);
  return adv;
}

SampleBatch collect_batch(const Environment& env, const PolicyParams& params, Rng& rng, std::size_t n) {
  if (n == 0) throw InvalidParameter("collect_batch: n must be >= 1");
  const Distribution dist = realize(params);
  SampleBatch batch;
  batch.actions.reserve(n);
  batch.rewards.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = sample(dist, rng);
    batch.actions.push_back(a);
    batch.rewards.push_back(sample_reward(env, clip_action(env, a), rng));
  }
  const PolicySnapshot snapshot(params, batch.actions);
  batch.old_log_probs.assign(snapshot.old_log_probs().begin(), snapshot.old_log_probs().end());
  batch.old_policy = params;
  batch.advantages.assign(n, 0.0);
  return batch;
}

std::vector<double> optimizer_step(const TrainConfig& config, std::span<const double> grad, AdamState& state) {
  std::vector<double> step(grad.begin(), grad.end());
  if (config.optimizer == Optimizer::kSgd) {
    for (double& g : step) g *= config.learning_rate;
    return step;
  }
  if (state.m.size() != grad.size()) {
    state.m.assign(grad.size(), 0.0);
    state.v.assign(grad.size(), 0.0);
    state.steps = 0;
  }
  ++state.steps;
  const auto& a = config.adam;
  const double c1 = 1.0 - std::pow(a.beta1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(a.beta2, static_cast<double>(state.steps));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    state.m[i] = a.beta1 * state.m[i] + (1.0 - a.beta1) * grad[i];
    state.v[i] = a.beta2 * state.v[i] + (1.0 - a.beta2) * grad[i] * grad[i];
    step[i] = config.learning_rate * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + a.epsilon);
  }
  return step;
}

IterationOutcome ppo_iteration(const Environment& env, const PolicyParams& params, const TrainConfig& config,
                               Rng& rng, TrainerState& state, std::size_t iteration_index) {
  ReturnScaler& running_state = state.scaler;
  config.validate();
  SampleBatch batch = collect_batch(env, params, rng, config.timesteps_per_iter);

  IterationRecord record;
  record.iteration = iteration_index;
  record.reward_mean = mean_of(batch.rewards);
  record.reward_std = population_std(batch.rewards, record.reward_mean);

  {
    // Std of the advantages before normalization, for the step-size diagnostic.
    TrainConfig raw = config;
    raw.advantage_normalization = false;
    ReturnScaler probe_state = running_state;
    SampleBatch copy = batch;
    compute_advantages(copy, raw, probe_state);
    record.advantage_std = population_std(copy.advantages, mean_of(copy.advantages));
  }
  compute_advantages(batch, config, running_state);

  PolicyParams current = params;
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t minibatches = batch.size() / config.minibatch_size;

  for (std::size_t epoch = 0; epoch < config.epochs && !record.diverged; ++epoch) {
    shuffle_indices(rng, order);
    for (std::size_t m = 0; m < minibatches; ++m) {
      const std::span<const std::size_t> idx(order.data() + m * config.minibatch_size, config.minibatch_size);
      const SampleBatch mini = batch.subset(idx);
      PolicyParams next = current;
      try {
        const auto grad = objective_gradient(config.surrogate, current, mini);
        add_scaled(next, optimizer_step(config, grad, state.adam), 1.0);
      } catch (const InvalidParameter&) {
        record.diverged = true;
        break;
      }
      if (!params_usable(next)) {
        record.diverged = true;
        break;
      }
      current = std::move(next);
    }
  }

  const Distribution updated = realize(current);
  std::vector<double> lr;
  try {
    lr = log_ratios(updated, batch);
  } catch (const InvalidParameter&) {
    record.diverged = true;
  }
  if (!lr.empty()) {
    record.kl_forward = forward_kl_estimate(lr);
    record.kl_reverse = reverse_kl_estimate(lr);
    double rmin = std::numeric_limits<double>::infinity();
    double rmax = -rmin;
    double rsum = 0.0;
    std::size_t inactive = 0;
    const auto* clip = std::get_if<ClipObjective>(&config.surrogate);
    for (std::size_t i = 0; i < lr.size(); ++i) {
      const double r = std::exp(lr[i]);
      rmin = std::min(rmin, r);
      rmax = std::max(rmax, r);
      rsum += r;
      if (clip && !clip_active_mask(clip->epsilon, r, batch.advantages[i])) ++inactive;
    }
    record.ratio_min = rmin;
    record.ratio_max = rmax;
    record.ratio_mean = rsum / static_cast<double>(lr.size());
    record.clip_inactive_fraction = clip ? static_cast<double>(inactive) / static_cast<double>(lr.size()) : kNaN;
  }
  record.probe_reward = expected_reward(env, updated);
  if (const auto* bandit = std::get_if<DiscreteSparseBandit>(&env)) {
    record.optimal_probability = std::get<Categorical>(updated).probs.at(bandit->optimal);
  } else {
    record.optimal_probability = kNaN;
  }
  record.policy = current;
  record.density = density_grid(env, updated, config.density_grid_points);
  return {std::move(current), std::move(record), std::move(batch)};
}

TrainResult train(const Environment& env, const PolicyParams& init_params, const TrainConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const double gamma = std::holds_alternative<ReturnStdScaling>(config.reward_scaling)
                           ? std::get<ReturnStdScaling>(config.reward_scaling).gamma
                           : 0.99;
  TrainerState state{ReturnScaler(gamma), {}};
  TrainResult result;
  result.final_params = init_params;
  result.records.reserve(config.iterations);
  for (std::size_t k = 1; k <= config.iterations; ++k) {
    auto outcome = ppo_iteration(env, result.final_params, config, rng, state, k);
    result.final_params = std::move(outcome.params);
    const bool diverged = outcome.record.diverged;
    result.records.push_back(std::move(outcome.record));
    if (diverged) {
      result.diverged = true;
      break;
    }
  }
  return result;
}

}  // namespace ppolab
