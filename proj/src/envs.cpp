#include "ppolab/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ppolab/error.hpp"

namespace ppolab {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr std::size_t kQuadratureCells = 4000;

double double_peak(double a) {
  return 1.1 * std::exp(-1.2 * (a + 2.0) * (a + 2.0)) + 0.9 * std::exp(-0.9 * (a - 1.0) * (a - 1.0));
}

std::size_t checked_index(const DiscreteSparseBandit& env, double action) {
  if (!(action >= 0.0) || action != std::floor(action) || action >= static_cast<double>(env.size())) {
    throw InvalidParameter("discrete bandit: invalid action index " + std::to_string(action));
  }
  return static_cast<std::size_t>(action);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

SinglePeakBandit SinglePeakBandit::wide() {
  SinglePeakBandit env;
  env.lo = -3.0;
  env.hi = 0.0;
  return env;
}

DiscreteSparseBandit DiscreteSparseBandit::planted(std::size_t n, Rng& rng) {
  if (n < 2) throw InvalidParameter("DiscreteSparseBandit: need at least two actions");
  const std::size_t zeros = n / 2;
  const std::size_t halves = n - zeros - 1;
  std::vector<double> layout;
  layout.reserve(n);
  layout.insert(layout.end(), zeros, 0.0);
  layout.insert(layout.end(), halves, 0.5);
  layout.push_back(1.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle_indices(rng, order);
  DiscreteSparseBandit env;
  env.means.resize(n);
  for (std::size_t i = 0; i < n; ++i) env.means[order[i]] = layout[i];
  env.optimal = order[n - 1];
  return env;
}

DiscreteSparseBandit DiscreteSparseBandit::discretized(const SinglePeakBandit& base) {
  DiscreteSparseBandit env;
  env.noise_std = base.noise_std;
  const auto lo_steps = static_cast<long>(std::lround(base.lo * 10.0));
  const auto hi_steps = static_cast<long>(std::lround(base.hi * 10.0));
  double best = -1.0;
  for (long k = lo_steps; k <= hi_steps; ++k) {
    const double a = static_cast<double>(k) / 10.0;
    const double r = (a > base.peak_lo && a < base.peak_hi) ? 1.0 : 0.0;
    if (r > best) {
      best = r;
      env.optimal = env.means.size();
    }
    env.grid_actions.push_back(a);
    env.means.push_back(r);
  }
  return env;
}

bool is_discrete(const Environment& env) { return std::holds_alternative<DiscreteSparseBandit>(env); }

std::pair<double, double> bounds(const Environment& env) {
  return std::visit(Overloaded{
                        [](const SinglePeakBandit& e) { return std::pair{e.lo, e.hi}; },
                        [](const DoublePeakBandit& e) { return std::pair{e.lo, e.hi}; },
                        [](const DiscreteSparseBandit& e) {
                          return std::pair{0.0, static_cast<double>(e.size()) - 1.0};
                        },
                    },
                    env);
}

double clip_action(const Environment& env, double action) {
  if (is_discrete(env)) return action;
  const auto [lo, hi] = bounds(env);
  return std::clamp(action, lo, hi);
}

double mean_reward(const Environment& env, double action) {
  return std::visit(Overloaded{
                        [&](const SinglePeakBandit& e) {
                          const double a = std::clamp(action, e.lo, e.hi);
                          return (a > e.peak_lo && a < e.peak_hi) ? 1.0 : 0.0;
                        },
                        [&](const DoublePeakBandit& e) { return double_peak(std::clamp(action, e.lo, e.hi)); },
                        [&](const DiscreteSparseBandit& e) { return e.means[checked_index(e, action)]; },
                    },
                    env);
}

double sample_reward(const Environment& env, double action, Rng& rng) {
  const double mean = mean_reward(env, action);
  const double noise = std::visit([](const auto& e) { return e.noise_std; }, env);
  if (noise <= 0.0) return mean;
  return sample_normal(rng, mean, noise);
}

double optimal_action(const Environment& env) {
  return std::visit(Overloaded{
                        [](const SinglePeakBandit& e) { return 0.5 * (e.peak_lo + e.peak_hi); },
                        [](const DoublePeakBandit&) { return -2.0; },
                        [](const DiscreteSparseBandit& e) { return static_cast<double>(e.optimal); },
                    },
                    env);
}

double optimal_reward(const Environment& env) { return mean_reward(env, optimal_action(env)); }

std::vector<LandscapePoint> landscape_probe(const Environment& env, std::span<const double> grid) {
  std::vector<LandscapePoint> out;
  out.reserve(grid.size());
  for (double a : grid) out.push_back({a, mean_reward(env, a)});
  return out;
}

std::vector<double> linear_grid(double lo, double hi, std::size_t points) {
  if (points == 0) return {};
  if (points == 1) return {lo};
  std::vector<double> grid(points);
  const double step = (hi - lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) grid[i] = lo + step * static_cast<double>(i);
  grid.back() = hi;
  return grid;
}

double expected_reward(const Environment& env, const Distribution& dist) {
  if (const auto* c = std::get_if<Categorical>(&dist)) {
    const auto& bandit = std::get<DiscreteSparseBandit>(env);
    if (c->size() != bandit.size()) throw InvalidParameter("expected_reward: action count mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < c->size(); ++i) total += c->probs[i] * bandit.means[i];
    return total;
  }
  if (is_discrete(env)) throw InvalidParameter("expected_reward: continuous policy on a discrete bandit");
  const auto [lo, hi] = bounds(env);

  if (const auto* g = std::get_if<Gaussian1D>(&dist)) {
    // Mass below lo / above hi is evaluated at the clipped boundary action.
    const double wlo = std::clamp(g->mu - 10.0 * g->sigma, lo, hi);
    const double whi = std::clamp(g->mu + 10.0 * g->sigma, lo, hi);
    double total = normal_cdf((wlo - g->mu) / g->sigma) * mean_reward(env, wlo) +
                   (1.0 - normal_cdf((whi - g->mu) / g->sigma)) * mean_reward(env, whi);
    if (whi > wlo) {
      const double width = (whi - wlo) / static_cast<double>(kQuadratureCells);
      double prev_cdf = normal_cdf((wlo - g->mu) / g->sigma);
      for (std::size_t i = 0; i < kQuadratureCells; ++i) {
        const double right = wlo + width * static_cast<double>(i + 1);
        const double cdf = normal_cdf((right - g->mu) / g->sigma);
        total += (cdf - prev_cdf) * mean_reward(env, right - 0.5 * width);
        prev_cdf = cdf;
      }
    }
    return total;
  }

  const auto& b = std::get<ScaledBeta>(dist);
  const double a = b.alpha, bb = b.beta;
  const double m = a / (a + bb);
  const double sd = std::sqrt(a * bb / ((a + bb) * (a + bb) * (a + bb + 1.0)));
  const double ulo = std::max(0.0, m - 12.0 * sd);
  const double uhi = std::min(1.0, m + 12.0 * sd);
  const double width = (uhi - ulo) / static_cast<double>(kQuadratureCells);
  double mass = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < kQuadratureCells; ++i) {
    const double x = ulo + width * (static_cast<double>(i) + 0.5);
    const double w = std::exp(log_prob(b, b.from_unit(x)));
    mass += w;
    total += w * mean_reward(env, b.from_unit(x));
  }
  return mass > 0.0 ? total / mass : 0.0;
}

ChainMDP::Rollout ChainMDP::rollout(std::size_t episodes) const {
  if (states == 0) throw InvalidParameter("ChainMDP: need at least one state");
  Rollout out;
  for (std::size_t e = 0; e < episodes; ++e) {
    for (std::size_t s = 0; s < states; ++s) {
      const bool last = s + 1 == states;
      out.states.push_back(s);
      out.rewards.push_back(last ? 1.0 : 0.0);
      out.dones.push_back(last);
    }
  }
  return out;
}

double ChainMDP::start_return() const { return std::pow(gamma, static_cast<double>(states) - 1.0); }

}  // namespace ppolab
