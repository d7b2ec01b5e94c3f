#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "ppolab/envs.hpp"
#include "ppolab/error.hpp"
#include "ppolab/trainer.hpp"

using namespace ppolab;

namespace {

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double pop_std(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / v.size());
}

SampleBatch rewards_only(std::vector<double> r) {
  SampleBatch b;
  b.rewards = std::move(r);
  b.actions.assign(b.rewards.size(), 0.0);
  b.old_log_probs.assign(b.rewards.size(), 0.0);
  b.advantages.assign(b.rewards.size(), 0.0);
  return b;
}

TrainConfig small_config() {
  TrainConfig c;
  c.iterations = 5;
  c.timesteps_per_iter = 64;
  c.minibatch_size = 16;
  c.epochs = 2;
  c.seed = 11;
  return c;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("advantage examples") {
  ReturnScaler scaler;
  TrainConfig c;
  c.baseline = Baseline::kZero;
  auto b = rewards_only({0.3, -1.0, 2.0});
  compute_advantages(b, c, scaler);
  CHECK(b.advantages == std::vector<double>{0.3, -1.0, 2.0});

  c.baseline = Baseline::kBatchMean;
  b = rewards_only({0.0, 0.5, 1.0});
  compute_advantages(b, c, scaler);
  CHECK(b.advantages[0] == doctest::Approx(-0.5));
  CHECK(b.advantages[1] == doctest::Approx(0.0));
  CHECK(b.advantages[2] == doctest::Approx(0.5));

  c.baseline = Baseline::kZero;
  c.advantage_normalization = true;
  b = rewards_only({1.0, 2.0, 3.0});
  compute_advantages(b, c, scaler);
  CHECK(b.advantages[0] == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(b.advantages[1] == doctest::Approx(0.0));
  CHECK(b.advantages[2] == doctest::Approx(1.2247).epsilon(1e-4));

  b = rewards_only({});
  CHECK_THROWS_AS(compute_advantages(b, c, scaler), InvalidParameter);
}

TEST_CASE("normalized advantages have zero mean and unit std") {
  Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(2 + t % 50);
    const double scale = std::pow(10.0, 6 * rng.uniform01() - 3);
    for (double& x : v) x = scale * (sample_normal(rng, 0, 1) + 3 * rng.uniform01());
    if (pop_std(v) <= 1e-8) continue;
    normalize_advantages(v);
    CHECK(std::abs(mean(v)) < 1e-9);
    CHECK(pop_std(v) == doctest::Approx(1.0).epsilon(1e-6));
  }
  std::vector<double> flat(8, 2.5);
  normalize_advantages(flat);
  for (double x : flat) CHECK(x == 0.0);
}

TEST_CASE("constant reward scaling") {
  ReturnScaler s;
  const std::vector<double> r{5.0};
  CHECK(scale_rewards(r, {}, ConstantRewardScaling{0.1}, s)[0] == doctest::Approx(0.5));
  CHECK(scale_rewards(r, {}, ConstantRewardScaling{1.0}, s)[0] == 5.0);
  CHECK(scale_rewards(r, {}, NoRewardScaling{}, s)[0] == 5.0);
  CHECK(s.count() == 0);
}

TEST_CASE("return-std scaling settles on a constant stream") {
  // r = 1 in episodes of 100 steps with gamma = 0.99: the return sequence is
  // periodic, so its running std and the scaled reward settle.
  ReturnScaler s(0.99);
  std::vector<double> ones(20000, 1.0);
  std::vector<bool> dones(ones.size(), false);
  for (std::size_t i = 99; i < dones.size(); i += 100) dones[i] = true;
  const auto out = scale_rewards(ones, dones, ReturnStdScaling{0.99}, s);
  CHECK(s.count() == ones.size());
  CHECK(std::abs(out[19999] - out[17999]) < 1e-3 * out[19999]);
  // Oracle: the sample std of the return sequence itself.
  std::vector<double> returns(ones.size());
  double g = 0;
  for (std::size_t i = 0; i < ones.size(); ++i) {
    returns[i] = g = 0.99 * g + 1.0;
    if (dones[i]) g = 0;
  }
  const double m = mean(returns);
  double ss = 0;
  for (double x : returns) ss += (x - m) * (x - m);
  CHECK(s.return_std() == doctest::Approx(std::sqrt(ss / (returns.size() - 1))).epsilon(1e-9));
  CHECK(out[19999] == doctest::Approx(1.0 / (s.return_std() + 1e-8)).epsilon(1e-12));
}

TEST_CASE("scale invariance of normalized batch-mean advantages") {
  Rng rng(13);
  std::vector<double> r(64);
  for (double& x : r) x = sample_normal(rng, 0.3, 1.0);
  TrainConfig c;
  c.advantage_normalization = true;
  ReturnScaler s;
  auto base = rewards_only(r);
  compute_advantages(base, c, s);
  for (double k : {0.001, 3.0, 17.5, 1e4}) {
    std::vector<double> scaled(r);
    for (double& x : scaled) x *= k;
    auto b = rewards_only(scaled);
    compute_advantages(b, c, s);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(std::abs(b.advantages[i] - base.advantages[i]) <= 1e-12);
  }
  // Power-of-two factors are exact, so whole trajectories coincide bitwise.
  for (const SurrogateSpec& spec : {SurrogateSpec{ClipObjective{0.2}}, SurrogateSpec{UnregularizedObjective{}}}) {
    auto cfg = small_config();
    cfg.advantage_normalization = true;
    cfg.surrogate = spec;
    const auto plain = train(SinglePeakBandit{}, GaussianPolicy{0, 0}, cfg);
    cfg.reward_scaling = ConstantRewardScaling{8.0};
    const auto scaled = train(SinglePeakBandit{}, GaussianPolicy{0, 0}, cfg);
    CHECK(raw_parameters(plain.final_params) == raw_parameters(scaled.final_params));
  }
}

TEST_CASE("GAE reductions on a chain") {
  const ChainMDP mdp{5, 0.9};
  const auto ro = mdp.rollout(2);
  const std::size_t n = ro.rewards.size();
  Rng rng(14);
  std::vector<double> values(n);
  for (double& v : values) v = rng.uniform01();

  // lambda = 0: one-step TD residuals.
  const auto td = compute_gae(ro.rewards, values, ro.dones, 0.9, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = ro.dones[t] ? 0.0 : values[t + 1];
    CHECK(td[t] == doctest::Approx(ro.rewards[t] + 0.9 * next - values[t]));
  }

  // lambda = 1, V = 0: brute-force discounted returns-to-go within each episode.
  const std::vector<double> zeros(n, 0.0);
  const auto mc = compute_gae(ro.rewards, zeros, ro.dones, 0.9, 1.0);
  const auto dr = discounted_returns(ro.rewards, ro.dones, 0.9);
  for (std::size_t t = 0; t < n; ++t) {
    double g = 0, w = 1;
    for (std::size_t u = t; u < n; ++u) {
      g += w * ro.rewards[u];
      w *= 0.9;
      if (ro.dones[u]) break;
    }
    CHECK(mc[t] == doctest::Approx(g).epsilon(1e-14));
    CHECK(dr[t] == doctest::Approx(g).epsilon(1e-14));
  }
  CHECK(mc[0] == doctest::Approx(mdp.start_return()).epsilon(1e-15));

  // Deterministic chain: the empirical values are exact, so every advantage vanishes.
  TrainConfig c;
  c.gae = GaeConfig{0.9, 0.95};
  ReturnScaler s;
  for (double a : compute_chain_advantages(mdp, ro, c, s)) CHECK(std::abs(a) < 1e-12);
  const auto v = empirical_state_values(ro.states, ro.rewards, ro.dones, 0.9, 5);
  for (std::size_t st = 0; st < 5; ++st) CHECK(v[st] == doctest::Approx(std::pow(0.9, 4 - st)));
}

TEST_CASE("collect_batch") {
  Rng rng(15);
  auto b = collect_batch(SinglePeakBandit{}, GaussianPolicy{0, 0}, rng, 512);
  CHECK(b.size() == 512);
  CHECK_NOTHROW(b.validate());
  bool saw_outside = false;
  for (std::size_t i = 0; i < b.size(); ++i) {
    CHECK(b.old_log_probs[i] == doctest::Approx(-0.5 * b.actions[i] * b.actions[i] - 0.5 * std::log(2 * M_PI)));
    saw_outside |= std::abs(b.actions[i]) > 1.5;
  }
  CHECK(saw_outside);

  // Outside the bounds the reward is that of the boundary action.
  SinglePeakBandit quiet;
  quiet.noise_std = 0;
  quiet.lo = -0.95;
  auto q = collect_batch(quiet, GaussianPolicy{-3, -2}, rng, 64);
  for (std::size_t i = 0; i < q.size(); ++i) {
    CHECK(q.actions[i] < -0.95);
    CHECK(q.rewards[i] == 1.0);
  }

  Rng r2(16);
  auto env = DiscreteSparseBandit::planted(5, r2);
  env.noise_std = 0;
  auto p = collect_batch(env, SoftmaxPolicy{{0, 0, 100, 0, 0}}, rng, 100);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(p.actions[i] == 2.0);
    CHECK(p.rewards[i] == env.means[2]);
  }
  CHECK_THROWS_AS(collect_batch(env, SoftmaxPolicy{{0, 0, 0, 0, 0}}, rng, 0), InvalidParameter);
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.gradient_steps_per_iteration() == 160);
  c.iterations = 0;
  CHECK_THROWS_AS(c.validate(), InvalidParameter);
  c = TrainConfig{};
  c.minibatch_size = 30;
  CHECK_THROWS_AS(c.validate(), InvalidParameter);
  c = TrainConfig{};
  c.learning_rate = -1;
  CHECK_THROWS_AS(c.validate(), InvalidParameter);
  c = TrainConfig{};
  c.reward_scaling = ConstantRewardScaling{0.0};
  CHECK_THROWS_AS(c.validate(), InvalidParameter);
  c = TrainConfig{};
  c.iterations = 0;
  CHECK_THROWS_AS(train(SinglePeakBandit{}, GaussianPolicy{}, c), InvalidParameter);
}

TEST_CASE("a default iteration takes 160 optimizer steps") {
  TrainConfig c;
  c.optimizer = Optimizer::kAdam;
  Rng rng(17);
  TrainerState st;
  ppo_iteration(SinglePeakBandit{}, BetaPolicy{-4, -4, -1.5, 1.5}, c, rng, st);
  CHECK(st.adam.steps == 160);
  ppo_iteration(SinglePeakBandit{}, BetaPolicy{-4, -4, -1.5, 1.5}, c, rng, st);
  CHECK(st.adam.steps == 320);
}

TEST_CASE("zero learning rate leaves the policy in place") {
  for (Optimizer opt : {Optimizer::kSgd, Optimizer::kAdam}) {
    TrainConfig c;
    c.learning_rate = 0;
    c.optimizer = opt;
    Rng rng(18);
    TrainerState st;
    const PolicyParams init = GaussianPolicy{0.2, -0.3};
    const auto out = ppo_iteration(SinglePeakBandit{}, init, c, rng, st);
    CHECK(raw_parameters(out.params) == raw_parameters(init));
    CHECK(out.record.kl_forward == 0.0);
    CHECK(out.record.kl_reverse == 0.0);
    CHECK(out.record.ratio_min == 1.0);
    CHECK(out.record.ratio_max == 1.0);
  }
}

TEST_CASE("one full-batch epoch is a plain policy-gradient step") {
  TrainConfig c;
  c.epochs = 1;
  c.timesteps_per_iter = 128;
  c.minibatch_size = 128;
  c.learning_rate = 0.05;
  c.surrogate = UnregularizedObjective{};
  Rng rng(19);
  TrainerState st;
  const PolicyParams init = BetaPolicy{0.1, -0.2, -1.5, 1.5};
  const auto out = ppo_iteration(SinglePeakBandit{}, init, c, rng, st);
  const auto g = objective_gradient(UnregularizedObjective{}, init, out.batch);
  const auto before = raw_parameters(init);
  const auto after = raw_parameters(out.params);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(after[i] == doctest::Approx(before[i] + 0.05 * g[i]));
}

TEST_CASE("Adam step") {
  TrainConfig c;
  c.optimizer = Optimizer::kAdam;
  c.learning_rate = 0.1;
  AdamState st;
  const std::vector<double> g{2.0, -0.5};
  // The first bias-corrected step is lr * sign(g) up to epsilon.
  const auto s1 = optimizer_step(c, g, st);
  CHECK(s1[0] == doctest::Approx(0.1));
  CHECK(s1[1] == doctest::Approx(-0.1));
  const std::vector<double> g2{1.0, 0.0};
  const auto s2 = optimizer_step(c, g2, st);
  const double m = (0.9 * 0.1 * 2.0 + 0.1 * 1.0) / (1 - 0.81);
  const double v = (0.999 * 0.001 * 4.0 + 0.001 * 1.0) / (1 - 0.999 * 0.999);
  CHECK(s2[0] == doctest::Approx(0.1 * m / (std::sqrt(v) + 1e-8)));
  c.optimizer = Optimizer::kSgd;
  CHECK(optimizer_step(c, g, st)[0] == doctest::Approx(0.2));
}

TEST_CASE("training is deterministic given the seed") {
  auto c = small_config();
  c.density_grid_points = 16;
  const auto a = train(SinglePeakBandit{}, GaussianPolicy{0, 0}, c);
  const auto b = train(SinglePeakBandit{}, GaussianPolicy{0, 0}, c);
  REQUIRE(a.records.size() == 5);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(a.records[k].iteration == k + 1);
    CHECK(a.records[k].reward_mean == b.records[k].reward_mean);
    CHECK(a.records[k].kl_reverse == b.records[k].kl_reverse);
    CHECK(a.records[k].density == b.records[k].density);
    CHECK(a.records[k].density.size() == 16);
  }
  c.seed = 12;
  const auto d = train(SinglePeakBandit{}, GaussianPolicy{0, 0}, c);
  CHECK(d.records[0].reward_mean != a.records[0].reward_mean);
}

TEST_CASE("divergence halts the run") {
  auto c = small_config();
  c.learning_rate = 1e300;
  c.surrogate = UnregularizedObjective{};
  const auto r = train(SinglePeakBandit{}, GaussianPolicy{0, 0}, c);
  CHECK(r.diverged);
  CHECK(r.records.back().diverged);
  CHECK(r.records.size() < 5);
}

TEST_CASE("discrete bandit converges under the Adam preset") {
  Rng env_rng(20);
  const auto env = DiscreteSparseBandit::planted(10, env_rng);
  TrainConfig c;
  c.optimizer = Optimizer::kAdam;
  c.advantage_normalization = true;
  c.surrogate = ReverseKlObjective{3.0, KlPenalty::kExact};
  c.seed = 21;
  const auto r = train(env, SoftmaxPolicy{std::vector<double>(10, 0.0)}, c);
  CHECK(r.records.back().optimal_probability >= 0.95);
  CHECK(std::isnan(train(SinglePeakBandit{}, GaussianPolicy{}, small_config()).records[0].optimal_probability));
}

TEST_CASE("reverse-KL steps stay near the old policy") {
  TrainConfig c;
  c.optimizer = Optimizer::kAdam;
  c.advantage_normalization = true;
  c.surrogate = ReverseKlObjective{3.0};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    c.seed = seed;
    const auto r = train(SinglePeakBandit{}, BetaPolicy{-4, -4, -1.5, 1.5}, c);
    std::vector<double> kls;
    for (const auto& rec : r.records) kls.push_back(rec.kl_reverse);
    auto sorted = kls;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double median = sorted[sorted.size() / 2];
    CHECK(*std::max_element(kls.begin(), kls.end()) <= 10 * median);
  }
}

}
