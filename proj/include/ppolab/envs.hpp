#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "ppolab/distributions.hpp"
#include "ppolab/rng.hpp"

namespace ppolab {

inline constexpr double kRewardNoiseStd = 0.1;

/// Reward 1 on the open interval (peak_lo, peak_hi), 0 elsewhere.
struct SinglePeakBandit {
  double lo = -1.5;
  double hi = 1.5;
  double peak_lo = -1.0;
  double peak_hi = -0.8;
  double noise_std = kRewardNoiseStd;

  /// Bounds [-3, 0] used for the per-sample weighting diagnostics.
  static SinglePeakBandit wide();
};

/// 1.1 exp(-1.2 (a + 2)^2) + 0.9 exp(-0.9 (a - 1)^2).
struct DoublePeakBandit {
  double lo = -5.0;
  double hi = 5.0;
  double noise_std = kRewardNoiseStd;
};

// Finite action set with fixed mean rewards.
struct DiscreteSparseBandit {
  std::vector<double> means;
  std::size_t optimal = 0;
  double noise_std = kRewardNoiseStd;

  /// floor(n/2) actions with mean 0, n - floor(n/2) - 1 with mean 0.5 and one
  /// with mean 1, placed by a seeded permutation. Requires n >= 2.
  static DiscreteSparseBandit planted(std::size_t n, Rng& rng);

  /// The single-peak landscape on a 0.1-spaced grid over its bounds (31 actions).
  static DiscreteSparseBandit discretized(const SinglePeakBandit& env);

  /// Action values of the discretized grid, index-aligned with `means`.
  std::vector<double> grid_actions;

  std::size_t size() const { return means.size(); }
};

using Environment = std::variant<SinglePeakBandit, DoublePeakBandit, DiscreteSparseBandit>;

bool is_discrete(const Environment& env);

/// Action bounds of a continuous environment; {0, n - 1} for a discrete one.
std::pair<double, double> bounds(const Environment& env);

/// Clamps a continuous action to the environment bounds; discrete actions pass through.
double clip_action(const Environment& env, double action);

/// Deterministic mean reward after clipping. Discrete actions are indices.
double mean_reward(const Environment& env, double action);

/// mean_reward + N(0, noise_std^2).
double sample_reward(const Environment& env, double action, Rng& rng);

/// Argmax of the mean reward.
double optimal_action(const Environment& env);

/// Maximum of the mean reward.
double optimal_reward(const Environment& env);

struct LandscapePoint {
  double action;
  double mean_reward;
};
std::vector<LandscapePoint> landscape_probe(const Environment& env, std::span<const double> grid);

/// Evenly spaced grid of `points` actions over [lo, hi].
std::vector<double> linear_grid(double lo, double hi, std::size_t points);

/// E_{a ~ dist}[mean_reward(clip(a))], evaluated by deterministic quadrature.
double expected_reward(const Environment& env, const Distribution& dist);

// Deterministic chain 0 -> 1 -> ... -> S-1 -> terminal, reward 1 on the last
// transition. Used to exercise multi-step advantage estimation.
struct ChainMDP {
  std::size_t states = 5;
  double gamma = 0.99;

  struct Rollout {
    std::vector<std::size_t> states;
    std::vector<double> rewards;
    std::vector<bool> dones;
  };

  /// `episodes` back-to-back episodes, each exactly `states` steps long.
  Rollout rollout(std::size_t episodes) const;

  /// Discounted return from the start state: gamma^(S - 1).
  double start_return() const;
};

}  // namespace ppolab
