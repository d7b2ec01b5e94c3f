#include "ppolab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "ppolab/error.hpp"

namespace ppolab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct IdName {
  ExperimentId id;
  const char* name;
};
constexpr IdName kIdNames[] = {
    {ExperimentId::kFailure1, "failure1"},         {ExperimentId::kFailure1Wide, "failure1_wide"},
    {ExperimentId::kFailure2, "failure2"},         {ExperimentId::kFailure3, "failure3"},
    {ExperimentId::kActionSweep, "action_sweep"},  {ExperimentId::kLrAblation, "lr_ablation"},
    {ExperimentId::kScalingAblation, "scaling_ablation"},
};

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double linf(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

template <class T>
T get_as(const nlohmann::json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidParameter("config key '" + key + "' has the wrong type");
  }
}

std::size_t get_count(const nlohmann::json& value, const std::string& key) {
  if (!value.is_number_integer() || value.get<long long>() < 0) {
    throw InvalidParameter("config key '" + key + "' must be a non-negative integer");
  }
  return value.get<std::size_t>();
}

// Shortest text that parses back to the same double.
std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string optimizer_name(Optimizer o) { return o == Optimizer::kAdam ? "adam" : "sgd"; }

}  // namespace

std::string to_string(ExperimentId id) {
  for (const auto& e : kIdNames) {
    if (e.id == id) return e.name;
  }
  return "unknown";
}

ExperimentId experiment_from_string(const std::string& name) {
  for (const auto& e : kIdNames) {
    if (name == e.name) return e.id;
  }
  throw InvalidParameter("unknown experiment '" + name + "'");
}

bool is_discrete_experiment(ExperimentId id) {
  return id == ExperimentId::kFailure3 || id == ExperimentId::kActionSweep || id == ExperimentId::kLrAblation;
}

void ExperimentConfig::validate() const {
  train.validate();
  if (runs == 0) throw InvalidParameter("runs must be >= 1");
  if (is_discrete_experiment(experiment) && policy != PolicyKind::kSoftmax) {
    throw InvalidParameter(to_string(experiment) + " needs the softmax policy");
  }
  if (experiment == ExperimentId::kFailure2 && policy == PolicyKind::kSoftmax) {
    throw InvalidParameter("failure2 has no discretized variant; use gaussian or beta");
  }
  if (num_actions < 2) throw InvalidParameter("num_actions must be >= 2");
  for (std::size_t n : dimensions) {
    if (n < 2) throw InvalidParameter("sweep dimensions must be >= 2");
  }
  for (const auto& s : surrogates) surrogate_from_string(s);
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidParameter("eta must be positive");
  if (regret_iterations == 0) throw InvalidParameter("regret_iterations must be >= 1");
}

ExperimentConfig preset(ExperimentId id) {
  ExperimentConfig c;
  c.experiment = id;
  c.train.iterations = 50;
  c.train.timesteps_per_iter = 512;
  c.train.minibatch_size = 32;
  c.train.epochs = 10;
  c.train.learning_rate = 0.1;
  c.train.optimizer = Optimizer::kAdam;
  c.train.advantage_normalization = true;
  c.train.baseline = Baseline::kBatchMean;
  c.train.surrogate = ClipObjective{0.2};
  switch (id) {
    case ExperimentId::kFailure1:
    case ExperimentId::kFailure1Wide:
    case ExperimentId::kFailure2:
      break;
    case ExperimentId::kFailure3:
      c.policy = PolicyKind::kSoftmax;
      break;
    case ExperimentId::kActionSweep:
      c.policy = PolicyKind::kSoftmax;
      for (std::size_t n = 10; n <= 100; n += 10) c.dimensions.push_back(n);
      c.surrogates = {"clip:0.2", "fkl:3:exact", "rkl:3:exact"};
      break;
    case ExperimentId::kLrAblation:
      c.policy = PolicyKind::kSoftmax;
      c.train.learning_rate = 0.001;
      break;
    case ExperimentId::kScalingAblation:
      c.train.advantage_normalization = false;
      c.train.reward_scaling = ReturnStdScaling{0.99};
      break;
  }
  return c;
}

std::string to_string(const RewardScaling& scaling) {
  if (const auto* c = std::get_if<ConstantRewardScaling>(&scaling)) return "constant:" + shortest(c->factor);
  if (const auto* r = std::get_if<ReturnStdScaling>(&scaling)) {
    return r->gamma == 0.99 ? "return_std" : "return_std:" + shortest(r->gamma);
  }
  return "none";
}

RewardScaling reward_scaling_from_string(const std::string& text) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  std::optional<double> value;
  if (colon != std::string::npos) {
    try {
      std::size_t used = 0;
      value = std::stod(text.substr(colon + 1), &used);
      if (used != text.size() - colon - 1) throw InvalidParameter("trailing characters");
    } catch (const std::exception&) {
      throw InvalidParameter("bad reward scaling '" + text + "'");
    }
  }
  if (name == "none" && !value) return NoRewardScaling{};
  if (name == "constant" && value) {
    if (!(*value > 0.0)) throw InvalidParameter("constant reward scale must be positive");
    return ConstantRewardScaling{*value};
  }
  if (name == "return_std") return ReturnStdScaling{value.value_or(0.99)};
  throw InvalidParameter("bad reward scaling '" + text + "' (none, constant:<c>, return_std[:gamma])");
}

std::string surrogate_to_string(const SurrogateSpec& spec) {
  auto penalty = [](KlPenalty p) { return p == KlPenalty::kExact ? ":exact" : ":sampled"; };
  if (const auto* c = std::get_if<ClipObjective>(&spec)) return "clip:" + shortest(c->epsilon);
  if (const auto* f = std::get_if<ForwardKlObjective>(&spec)) return "fkl:" + shortest(f->beta) + penalty(f->penalty);
  if (const auto* r = std::get_if<ReverseKlObjective>(&spec)) return "rkl:" + shortest(r->beta) + penalty(r->penalty);
  return "unreg";
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["experiment"] = to_string(c.experiment);
  j["policy"] = to_string(c.policy);
  j["surrogate"] = surrogate_to_string(c.train.surrogate);
  j["runs"] = c.runs;
  j["seed"] = c.seed;
  j["num_actions"] = c.num_actions;
  j["dimensions"] = c.dimensions;
  j["surrogates"] = c.surrogates;
  j["iterations"] = c.train.iterations;
  j["timesteps_per_iter"] = c.train.timesteps_per_iter;
  j["minibatch_size"] = c.train.minibatch_size;
  j["epochs"] = c.train.epochs;
  j["learning_rate"] = c.train.learning_rate;
  j["optimizer"] = optimizer_name(c.train.optimizer);
  j["adam_beta1"] = c.train.adam.beta1;
  j["adam_beta2"] = c.train.adam.beta2;
  j["adam_epsilon"] = c.train.adam.epsilon;
  j["advantage_normalization"] = c.train.advantage_normalization;
  j["reward_scaling"] = to_string(c.train.reward_scaling);
  j["baseline"] = c.train.baseline == Baseline::kZero ? "zero" : "batch_mean";
  j["density_grid_points"] = c.train.density_grid_points;
  j["regret_iterations"] = c.regret_iterations;
  j["eta"] = c.eta;
  j["warmup_iterations"] = c.warmup_iterations;
  j["out"] = c.out_dir;
  j["jobs"] = c.jobs;
  j["svg"] = c.svg;
  return j;
}

ExperimentConfig apply_json(const nlohmann::json& doc, ExperimentConfig c) {
  if (!doc.is_object()) throw InvalidParameter("config must be a flat JSON object");
  if (doc.contains("experiment")) {
    c = preset(experiment_from_string(get_as<std::string>(doc["experiment"], "experiment")));
  }
  for (const auto& [key, value] : doc.items()) {
    if (key == "experiment") {
      continue;
    } else if (key == "policy") {
      c.policy = policy_kind_from_string(get_as<std::string>(value, key));
    } else if (key == "surrogate") {
      c.train.surrogate = surrogate_from_string(get_as<std::string>(value, key));
    } else if (key == "runs") {
      c.runs = get_count(value, key);
    } else if (key == "seed") {
      if (!value.is_number_integer()) throw InvalidParameter("config key 'seed' must be an integer");
      c.seed = value.get<std::uint64_t>();
    } else if (key == "num_actions") {
      c.num_actions = get_count(value, key);
    } else if (key == "dimensions") {
      if (!value.is_array()) throw InvalidParameter("config key 'dimensions' must be an array");
      c.dimensions.clear();
      for (const auto& v : value) c.dimensions.push_back(get_count(v, key));
    } else if (key == "surrogates") {
      c.surrogates = get_as<std::vector<std::string>>(value, key);
    } else if (key == "iterations") {
      c.train.iterations = get_count(value, key);
    } else if (key == "timesteps_per_iter") {
      c.train.timesteps_per_iter = get_count(value, key);
    } else if (key == "minibatch_size") {
      c.train.minibatch_size = get_count(value, key);
    } else if (key == "epochs") {
      c.train.epochs = get_count(value, key);
    } else if (key == "learning_rate") {
      c.train.learning_rate = get_as<double>(value, key);
    } else if (key == "optimizer") {
      const auto name = get_as<std::string>(value, key);
      if (name == "sgd") {
        c.train.optimizer = Optimizer::kSgd;
      } else if (name == "adam") {
        c.train.optimizer = Optimizer::kAdam;
      } else {
        throw InvalidParameter("optimizer must be sgd or adam");
      }
    } else if (key == "adam_beta1") {
      c.train.adam.beta1 = get_as<double>(value, key);
    } else if (key == "adam_beta2") {
      c.train.adam.beta2 = get_as<double>(value, key);
    } else if (key == "adam_epsilon") {
      c.train.adam.epsilon = get_as<double>(value, key);
    } else if (key == "advantage_normalization") {
      c.train.advantage_normalization = get_as<bool>(value, key);
    } else if (key == "reward_scaling") {
      c.train.reward_scaling = reward_scaling_from_string(get_as<std::string>(value, key));
    } else if (key == "baseline") {
      const auto name = get_as<std::string>(value, key);
      if (name == "batch_mean") {
        c.train.baseline = Baseline::kBatchMean;
      } else if (name == "zero") {
        c.train.baseline = Baseline::kZero;
      } else {
        throw InvalidParameter("baseline must be batch_mean or zero");
      }
    } else if (key == "density_grid_points") {
      c.train.density_grid_points = get_count(value, key);
    } else if (key == "regret_iterations") {
      c.regret_iterations = get_count(value, key);
    } else if (key == "eta") {
      c.eta = get_as<double>(value, key);
    } else if (key == "warmup_iterations") {
      c.warmup_iterations = get_count(value, key);
    } else if (key == "out") {
      c.out_dir = get_as<std::string>(value, key);
    } else if (key == "jobs") {
      c.jobs = get_count(value, key);
    } else if (key == "svg") {
      c.svg = get_as<bool>(value, key);
    } else {
      throw InvalidParameter("unknown config key '" + key + "'");
    }
  }
  return c;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  auto j = to_json(config);
  j.erase("out");
  j.erase("jobs");
  j.erase("svg");
  j.erase("density_grid_points");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

Environment make_environment(const ExperimentConfig& config, std::uint64_t run_seed) {
  switch (config.experiment) {
    case ExperimentId::kFailure1:
    case ExperimentId::kScalingAblation:
      if (config.policy == PolicyKind::kSoftmax) return DiscreteSparseBandit::discretized(SinglePeakBandit{});
      return SinglePeakBandit{};
    case ExperimentId::kFailure1Wide:
      if (config.policy == PolicyKind::kSoftmax) {
        return DiscreteSparseBandit::discretized(SinglePeakBandit::wide());
      }
      return SinglePeakBandit::wide();
    case ExperimentId::kFailure2:
      return DoublePeakBandit{};
    case ExperimentId::kFailure3:
    case ExperimentId::kActionSweep:
    case ExperimentId::kLrAblation: {
      Rng env_rng(derive_seed(run_seed, 0xe11));
      return DiscreteSparseBandit::planted(config.num_actions, env_rng);
    }
  }
  throw InvalidParameter("unhandled experiment");
}

PolicyParams make_initial_policy(const ExperimentConfig& config, const Environment& env) {
  switch (config.policy) {
    case PolicyKind::kGaussian:
      if (is_discrete(env)) throw InvalidParameter("gaussian policy needs a continuous environment");
      return init_policy(GaussianStandardInit{});
    case PolicyKind::kBeta: {
      if (is_discrete(env)) throw InvalidParameter("beta policy needs a continuous environment");
      const auto [lo, hi] = bounds(env);
      return init_policy(BetaNearUniformInit{lo, hi});
    }
    case PolicyKind::kSoftmax:
      if (!is_discrete(env)) throw InvalidParameter("softmax policy needs a discrete environment");
      return init_policy(SoftmaxUniformInit{std::get<DiscreteSparseBandit>(env).size()});
  }
  throw InvalidParameter("unhandled policy kind");
}

bool detect_collapse(std::span<const IterationRecord> records, double high, double low, std::size_t stay) {
  bool reached = false;
  std::size_t below = 0;
  for (const auto& r : records) {
    if (reached && r.probe_reward < low) {
      if (++below >= stay) return true;
    } else {
      below = 0;
    }
    if (r.probe_reward > high) reached = true;
  }
  return false;
}

double tail_probe_reward(std::span<const IterationRecord> records) {
  if (records.empty()) return kNaN;
  const std::size_t take = std::min<std::size_t>(11, records.size());
  double s = 0.0;
  for (std::size_t i = records.size() - take; i < records.size(); ++i) s += records[i].probe_reward;
  return s / static_cast<double>(take);
}

double policy_location(const PolicyParams& params) {
  const Distribution d = realize(params);
  if (const auto* g = std::get_if<Gaussian1D>(&d)) return g->mu;
  if (const auto* b = std::get_if<ScaledBeta>(&d)) return b->mode();
  return kNaN;
}

RunVerdict judge(const Environment& env, const TrainResult& result) {
  RunVerdict v;
  v.diverged = result.diverged;
  v.collapsed = detect_collapse(result.records);
  v.tail_reward = tail_probe_reward(result.records);
  v.final_reward = result.records.empty() ? kNaN : result.records.back().probe_reward;
  v.optimal_probability = result.records.empty() ? kNaN : result.records.back().optimal_probability;
  v.location = policy_location(result.final_params);
  if (result.diverged || result.records.empty()) return v;
  if (is_discrete(env)) {
    v.converged = v.optimal_probability >= 0.95;
  } else if (std::holds_alternative<DoublePeakBandit>(env)) {
    v.converged = std::abs(v.location - optimal_action(env)) <= 0.5;
  } else {
    v.converged = v.tail_reward >= 0.7;
  }
  return v;
}

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& task) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, count);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (std::size_t t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < count;) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<RunOutcome> run_experiment(const ExperimentConfig& config) {
  config.validate();
  std::vector<RunOutcome> out(config.runs);
  parallel_for(config.runs, config.jobs, [&](std::size_t i) {
    RunOutcome& run = out[i];
    run.index = i;
    run.seed = derive_seed(config.seed, i);
    run.env = make_environment(config, run.seed);
    TrainConfig train = config.train;
    train.seed = run.seed;
    run.result = ppolab::train(run.env, make_initial_policy(config, run.env), train);
    run.verdict = judge(run.env, run.result);
  });
  return out;
}

WilsonInterval wilson_interval(std::size_t successes, std::size_t total, double z) {
  if (total == 0) return {0.0, 1.0};
  const double n = static_cast<double>(total);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / (1.0 + z2 / n);
  // The closed form leaves rounding residue at the extremes, where the bound is exact.
  const double low = successes == 0 ? 0.0 : std::max(0.0, centre - half);
  const double high = successes == total ? 1.0 : std::min(1.0, centre + half);
  return {low, high};
}

ExperimentSummary summarize(std::span<const RunOutcome> runs) {
  ExperimentSummary s;
  s.runs = runs.size();
  double sum = 0.0;
  double sq = 0.0;
  std::size_t finite = 0;
  for (const auto& r : runs) {
    s.converged += r.verdict.converged;
    s.collapsed += r.verdict.collapsed;
    s.diverged += r.verdict.diverged;
    if (std::isfinite(r.verdict.final_reward)) {
      sum += r.verdict.final_reward;
      sq += r.verdict.final_reward * r.verdict.final_reward;
      ++finite;
    }
  }
  if (finite > 0) {
    s.mean_final_reward = sum / static_cast<double>(finite);
    s.std_final_reward = std::sqrt(std::max(0.0, sq / static_cast<double>(finite) - s.mean_final_reward * s.mean_final_reward));
  }
  if (s.runs > 0) {
    s.convergence_fraction = static_cast<double>(s.converged) / static_cast<double>(s.runs);
    s.collapse_fraction = static_cast<double>(s.collapsed) / static_cast<double>(s.runs);
  }
  s.convergence_ci = wilson_interval(s.converged, s.runs);
  return s;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& config) {
  config.validate();
  const std::vector<std::size_t> dims =
      config.dimensions.empty() ? std::vector<std::size_t>{config.num_actions} : config.dimensions;
  const std::vector<std::string> names = config.surrogates.empty()
                                             ? std::vector<std::string>{surrogate_to_string(config.train.surrogate)}
                                             : config.surrogates;
  struct Cell {
    std::size_t n;
    SurrogateSpec spec;
  };
  std::vector<Cell> cells;
  for (std::size_t n : dims) {
    for (const auto& name : names) cells.push_back({n, surrogate_from_string(name)});
  }
  const std::size_t total = cells.size() * config.runs;
  std::vector<char> converged(total, 0);
  parallel_for(total, config.jobs, [&](std::size_t job) {
    const Cell& cell = cells[job / config.runs];
    const std::size_t run = job % config.runs;
    ExperimentConfig c = config;
    c.num_actions = cell.n;
    c.train.surrogate = cell.spec;
    const std::uint64_t seed = derive_seed(derive_seed(config.seed, cell.n), run);
    const Environment env = make_environment(c, seed);
    c.train.seed = seed;
    const auto result = ppolab::train(env, make_initial_policy(c, env), c.train);
    converged[job] = judge(env, result).converged;
  });
  std::vector<SweepRow> rows;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    SweepRow row;
    row.n = cells[k].n;
    row.surrogate = tag(cells[k].spec);
    row.policy = to_string(config.policy);
    row.total = config.runs;
    for (std::size_t r = 0; r < config.runs; ++r) row.converged += converged[k * config.runs + r];
    row.fraction = static_cast<double>(row.converged) / static_cast<double>(row.total);
    const auto ci = wilson_interval(row.converged, row.total);
    row.ci_low = ci.low;
    row.ci_high = ci.high;
    rows.push_back(std::move(row));
  }
  return rows;
}

GradcheckReport run_gradcheck(std::uint64_t seed, std::size_t configs_per_cell, double tolerance,
                              const GradientFn& analytic) {
  const std::vector<std::string> surrogates = {"clip:0.2", "fkl:3", "rkl:3", "unreg", "fkl:3:exact", "rkl:3:exact"};
  const PolicyKind families[] = {PolicyKind::kGaussian, PolicyKind::kBeta, PolicyKind::kSoftmax};
  constexpr double kStep = 1e-5;
  constexpr double kKinkMargin = 1e-3;
  constexpr std::size_t kBatch = 16;
  GradcheckReport report;
  for (std::size_t s = 0; s < surrogates.size(); ++s) {
    const SurrogateSpec spec = surrogate_from_string(surrogates[s]);
    for (std::size_t f = 0; f < 3; ++f) {
      GradcheckCell cell;
      cell.surrogate = tag(spec);
      cell.policy = to_string(families[f]);
      // Same stream for every surrogate, so all cells see the same configurations.
      Rng rng(derive_seed(seed, f));
      for (std::size_t t = 0; t < configs_per_cell; ++t) {
        auto u = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform01(); };
        PolicyParams old;
        Environment env = SinglePeakBandit{};
        if (families[f] == PolicyKind::kGaussian) {
          old = GaussianPolicy{u(-1.0, 1.0), u(-1.0, 0.5)};
        } else if (families[f] == PolicyKind::kBeta) {
          old = BetaPolicy{u(-2.0, 2.0), u(-2.0, 2.0), -1.5, 1.5};
        } else {
          const std::size_t n = 3 + static_cast<std::size_t>(rng.uniform01() * 6.0);
          SoftmaxPolicy sp;
          for (std::size_t i = 0; i < n; ++i) sp.logits.push_back(u(-1.0, 1.0));
          old = sp;
          env = DiscreteSparseBandit::planted(n, rng);
        }
        SampleBatch batch = collect_batch(env, old, rng, kBatch);
        for (double& a : batch.advantages) a = u(-1.0, 1.0);
        auto raw = raw_parameters(old);
        for (double& x : raw) x += u(-0.5, 0.5);
        const PolicyParams current = with_raw_parameters(old, raw);

        if (const auto* clip = std::get_if<ClipObjective>(&spec)) {
          const auto lr = log_ratios(realize(current), batch);
          const bool near_kink = std::any_of(lr.begin(), lr.end(), [&](double l) {
            return near_clip_boundary(clip->epsilon, std::exp(l), kKinkMargin);
          });
          if (near_kink) {
            ++cell.excluded;
            continue;
          }
        }
        const auto g = analytic(spec, current, batch);
        const auto fd = fd_gradient(spec, current, batch, kStep);
        std::vector<double> diff(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) diff[i] = g[i] - fd[i];
        const double denom = std::max({linf(g), linf(fd), 1e-6});
        const double err = g.size() == fd.size() ? linf(diff) / denom : std::numeric_limits<double>::infinity();
        cell.max_relative_error = std::max(cell.max_relative_error, std::isfinite(err) ? err : 1e300);
        ++cell.checked;
      }
      cell.passed = cell.max_relative_error <= tolerance && cell.checked > 0;
      report.passed = report.passed && cell.passed;
      report.excluded += cell.excluded;
      report.cells.push_back(cell);
    }
  }
  return report;
}

RegretLedger ppo_rkl_ledger(const DiscreteSparseBandit& env, const TrainConfig& train) {
  const auto* rkl = std::get_if<ReverseKlObjective>(&train.surrogate);
  if (!rkl) throw InvalidParameter("the PPO regret ledger needs a reverse-KL surrogate");
  const double eta = 1.0 / rkl->beta;
  const std::size_t n = env.size();
  const PolicyParams init = init_policy(SoftmaxUniformInit{n});
  const TrainResult result = ppolab::train(env, init, train);

  RegretLedger ledger;
  ledger.domain_size = n;
  const auto comparator = DiscreteDistribution::point_mass(n, env.optimal);
  auto pi = DiscreteDistribution(std::get<Categorical>(realize(init)).probs);
  ledger.initial_divergence = kl_divergence(comparator, pi);
  std::vector<double> payoff(n);
  std::vector<double> squared(n);
  for (const auto& record : result.records) {
    const double baseline = pi.expect(env.means);
    double rho = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      payoff[i] = env.means[i] - baseline;
      squared[i] = payoff[i] * payoff[i];
      rho = std::max(rho, std::abs(payoff[i]));
    }
    const auto next = DiscreteDistribution(std::get<Categorical>(realize(record.policy)).probs);
    RegretTerm term;
    term.eta = eta;
    term.rho = rho;
    term.payoff_current = pi.expect(payoff);
    term.payoff_comparator = comparator.expect(payoff);
    term.payoff_max = *std::max_element(payoff.begin(), payoff.end());
    term.second_moment = pi.expect(squared);
    // The softmax family is the open simplex, so the exact projection is the MW target itself.
    const auto target = mw_update(pi, payoff, eta);
    term.alpha = measure_alpha(target, next, FullSimplex{}, pi);
    ledger.terms.push_back(term);
    pi = next;
  }
  return ledger;
}

DiagnoseResult diagnose_iteration(const ExperimentConfig& config) {
  config.validate();
  const std::uint64_t seed = derive_seed(config.seed, 0);
  const Environment env = make_environment(config, seed);
  PolicyParams params = make_initial_policy(config, env);
  TrainConfig train = config.train;
  train.seed = seed;
  Rng rng(seed);
  const double gamma = std::holds_alternative<ReturnStdScaling>(train.reward_scaling)
                           ? std::get<ReturnStdScaling>(train.reward_scaling).gamma
                           : 0.99;
  TrainerState state{ReturnScaler(gamma), {}};
  for (std::size_t k = 1; k <= config.warmup_iterations; ++k) {
    auto step = ppo_iteration(env, params, train, rng, state, k);
    if (step.record.diverged) throw ConvergenceError("run diverged during warm-up", static_cast<double>(k));
    params = std::move(step.params);
  }
  auto outcome = ppo_iteration(env, params, train, rng, state, config.warmup_iterations + 1);
  DiagnoseResult out;
  out.before = params;
  out.after = outcome.params;
  const Distribution old_dist = realize(out.before);
  const Distribution new_dist = realize(out.after);
  const SampleBatch& batch = outcome.batch;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    DiagnoseRow row;
    row.action = batch.actions[i];
    row.reward = batch.rewards[i];
    const double log_r = log_prob(new_dist, row.action) - batch.old_log_probs[i];
    row.ratio = std::exp(log_r);
    row.score_norm = norm2(score_raw(out.before, old_dist, row.action));
    row.weighting = sample_weighting(train.surrogate, row.ratio, batch.advantages[i]);
    row.grad_contrib = std::abs(gradient_coefficient(train.surrogate, row.ratio, log_r, batch.advantages[i])) *
                       norm2(score_raw(out.after, new_dist, row.action));
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace ppolab
