#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "ppolab/envs.hpp"
#include "ppolab/error.hpp"
#include "ppolab/rng.hpp"

using namespace ppolab;

TEST_SUITE("envs") {

TEST_CASE("single peak rewards") {
  const SinglePeakBandit env;
  CHECK(mean_reward(env, -0.9) == 1.0);
  CHECK(mean_reward(env, -1.0) == 0.0);
  CHECK(mean_reward(env, -0.8) == 0.0);
  CHECK(mean_reward(env, 0.5) == 0.0);
  CHECK(optimal_action(env) == doctest::Approx(-0.9));
  CHECK(optimal_reward(env) == 1.0);
  const auto wide = SinglePeakBandit::wide();
  CHECK(bounds(wide) == std::pair{-3.0, 0.0});
  CHECK(mean_reward(wide, -0.85) == 1.0);
}

TEST_CASE("double peak rewards") {
  const DoublePeakBandit env;
  CHECK(mean_reward(env, -2.0) == doctest::Approx(1.1 + 0.9 * std::exp(-8.1)).epsilon(1e-12));
  CHECK(mean_reward(env, -2.0) == doctest::Approx(1.10027).epsilon(1e-5));
  CHECK(mean_reward(env, 1.0) == doctest::Approx(0.9 + 1.1 * std::exp(-10.8)).epsilon(1e-12));
  CHECK(optimal_action(env) == doctest::Approx(-2.0).epsilon(1e-3));
  CHECK(optimal_reward(env) >= mean_reward(env, -2.0));

  // Local maximum near +1, global near -2.
  double best_right = -1, arg_right = 0;
  for (double a = 0.0; a <= 3.0; a += 1e-3) {
    if (mean_reward(env, a) > best_right) {
      best_right = mean_reward(env, a);
      arg_right = a;
    }
  }
  CHECK(std::abs(arg_right - 1.0) < 0.01);
  CHECK(best_right < optimal_reward(env));
}

TEST_CASE("continuous envs clip before evaluating") {
  const SinglePeakBandit env;
  CHECK(clip_action(env, -7.0) == -1.5);
  CHECK(clip_action(env, 9.0) == 1.5);
  CHECK(mean_reward(env, -100.0) == mean_reward(env, -1.5));
  const DoublePeakBandit dp;
  for (double a : {5.0, 6.0, 1e6}) CHECK(mean_reward(dp, a) == mean_reward(dp, 5.0));
  for (double a : {-5.0, -6.0, -1e6}) CHECK(mean_reward(dp, a) == mean_reward(dp, -5.0));
}

TEST_CASE("planted bandit reward counts") {
  Rng rng(5);
  auto env = DiscreteSparseBandit::planted(10, rng);
  std::map<double, int> counts;
  for (double m : env.means) counts[m]++;
  CHECK(counts[0.0] == 5);
  CHECK(counts[0.5] == 4);
  CHECK(counts[1.0] == 1);
  CHECK(env.means[env.optimal] == 1.0);
  CHECK(optimal_action(env) == static_cast<double>(env.optimal));

  for (std::size_t n = 2; n <= 1000; ++n) {
    auto e = DiscreteSparseBandit::planted(n, rng);
    REQUIRE(e.size() == n);
    const auto zeros = std::count(e.means.begin(), e.means.end(), 0.0);
    const auto halves = std::count(e.means.begin(), e.means.end(), 0.5);
    const auto ones = std::count(e.means.begin(), e.means.end(), 1.0);
    REQUIRE(static_cast<std::size_t>(zeros) == n / 2);
    REQUIRE(static_cast<std::size_t>(halves) == n - n / 2 - 1);
    REQUIRE(ones == 1);
    REQUIRE(e.means[e.optimal] == 1.0);
  }
  CHECK_THROWS_AS(DiscreteSparseBandit::planted(1, rng), InvalidParameter);
}

TEST_CASE("planted index follows the seed") {
  Rng a(77), b(77);
  CHECK(DiscreteSparseBandit::planted(100, a).optimal == DiscreteSparseBandit::planted(100, b).optimal);
  std::vector<std::size_t> seen;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng r(s);
    seen.push_back(DiscreteSparseBandit::planted(100, r).optimal);
  }
  std::sort(seen.begin(), seen.end());
  CHECK(std::unique(seen.begin(), seen.end()) - seen.begin() > 10);
}

TEST_CASE("invalid discrete indices") {
  Rng rng(6);
  const Environment env = DiscreteSparseBandit::planted(4, rng);
  CHECK_THROWS_AS(mean_reward(env, 4.0), InvalidParameter);
  CHECK_THROWS_AS(mean_reward(env, -1.0), InvalidParameter);
  CHECK_THROWS_AS(mean_reward(env, 1.5), InvalidParameter);
  CHECK_THROWS_AS(mean_reward(env, NAN), InvalidParameter);
  CHECK(clip_action(env, 3.0) == 3.0);
  CHECK(bounds(env) == std::pair{0.0, 3.0});
}

TEST_CASE("discretized single peak") {
  const auto env = DiscreteSparseBandit::discretized(SinglePeakBandit{});
  CHECK(env.size() == 31);
  CHECK(env.grid_actions.front() == -1.5);
  CHECK(env.grid_actions.back() == 1.5);
  CHECK(env.grid_actions[env.optimal] == doctest::Approx(-0.9));
  CHECK(std::count(env.means.begin(), env.means.end(), 1.0) == 1);
}

TEST_CASE("sampled reward noise") {
  Rng rng(7);
  const Environment env = DoublePeakBandit{};
  const double mean = mean_reward(env, 1.0);
  double s = 0, s2 = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double r = sample_reward(env, 1.0, rng) - mean;
    s += r;
    s2 += r * r;
  }
  CHECK(std::abs(s / n) < 0.002);
  const double var = s2 / n - (s / n) * (s / n);
  CHECK(std::abs(var - 0.01) < 0.0005);

  SinglePeakBandit quiet;
  quiet.noise_std = 0.0;
  for (int i = 0; i < 10; ++i) CHECK(sample_reward(quiet, -0.9, rng) == 1.0);
}

TEST_CASE("landscape probe") {
  const Environment sp = SinglePeakBandit{};
  const auto grid = linear_grid(-1.5, 1.5, 301);
  CHECK(grid.size() == 301);
  CHECK(grid.back() == 1.5);
  const auto pts = landscape_probe(sp, grid);
  int ones = 0;
  for (const auto& p : pts) {
    CHECK((p.mean_reward == 0.0 || p.mean_reward == 1.0));
    ones += p.mean_reward == 1.0;
  }
  CHECK(ones >= 19);
  CHECK(ones <= 21);

  const std::vector<double> two{-2.0, 1.0};
  const auto dp = landscape_probe(DoublePeakBandit{}, two);
  CHECK(dp[0].mean_reward == doctest::Approx(1.10027).epsilon(1e-5));
  CHECK(dp[1].mean_reward == doctest::Approx(0.90002).epsilon(1e-5));
  CHECK(landscape_probe(sp, std::vector<double>{}).empty());
  CHECK(linear_grid(0, 1, 0).empty());
}

TEST_CASE("expected reward against Monte Carlo") {
  Rng rng(8);
  const Environment sp = SinglePeakBandit{};
  const Environment dp = DoublePeakBandit{};
  struct Case {
    const Environment* env;
    Distribution dist;
  };
  const Case cases[] = {{&sp, Gaussian1D(-0.8, 0.3)}, {&sp, Gaussian1D(1.4, 1.0)},
                        {&sp, ScaledBeta(3.0, 5.0, -1.5, 1.5)}, {&dp, Gaussian1D(0.0, 2.0)},
                        {&dp, ScaledBeta(1.01815, 1.01815, -5, 5)}};
  for (const auto& c : cases) {
    const int n = 200000;
    double total = 0;
    for (int i = 0; i < n; ++i) total += mean_reward(*c.env, sample(c.dist, rng));
    CHECK(std::abs(expected_reward(*c.env, c.dist) - total / n) < 5e-3);
  }
  // Narrow Gaussian centred on the peak: reward is the mass inside (-1, -0.8).
  const Gaussian1D g(-0.9, 0.05);
  const double inside = std::erf(0.1 / (0.05 * std::sqrt(2.0)));
  CHECK(expected_reward(sp, g) == doctest::Approx(inside).epsilon(1e-6));
}

TEST_CASE("chain MDP") {
  const ChainMDP mdp{5, 0.9};
  const auto ro = mdp.rollout(3);
  CHECK(ro.states.size() == 15);
  CHECK(std::count(ro.dones.begin(), ro.dones.end(), true) == 3);
  for (std::size_t t = 0; t < 15; ++t) {
    CHECK(ro.states[t] == t % 5);
    CHECK(ro.rewards[t] == (t % 5 == 4 ? 1.0 : 0.0));
  }
  CHECK(mdp.start_return() == std::pow(0.9, 4));
  CHECK_THROWS_AS((ChainMDP{0, 0.9}.rollout(1)), InvalidParameter);
}

}
