#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ppolab/envs.hpp"
#include "ppolab/mw_theory.hpp"
#include "ppolab/policy.hpp"
#include "ppolab/surrogate.hpp"
#include "ppolab/trainer.hpp"

namespace ppolab {

inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr int kManifestSchemaVersion = 1;

enum class ExperimentId {
  kFailure1,         // single-peak bandit on [-1.5, 1.5]
  kFailure1Wide,     // single-peak bandit on [-3, 0]
  kFailure2,         // double-peak bandit
  kFailure3,         // sparse discrete bandit
  kActionSweep,      // sparse discrete bandit over several action counts
  kLrAblation,       // sparse discrete bandit at lr 0.001
  kScalingAblation,  // single-peak bandit with return-std reward scaling
};

std::string to_string(ExperimentId id);
ExperimentId experiment_from_string(const std::string& name);
bool is_discrete_experiment(ExperimentId id);

struct ExperimentConfig {
  ExperimentId experiment = ExperimentId::kFailure1;
  PolicyKind policy = PolicyKind::kGaussian;
  TrainConfig train;
  std::size_t runs = 20;
  std::uint64_t seed = 0;
  /// Action count of the discrete experiments.
  std::size_t num_actions = 100;
  /// Sweep axes; empty means the single num_actions / train.surrogate cell.
  std::vector<std::size_t> dimensions;
  std::vector<std::string> surrogates;
  std::size_t regret_iterations = 200;
  double eta = 0.5;
  /// Iterations trained before the diagnosed one.
  std::size_t warmup_iterations = 0;
  std::string out_dir = "out";
  /// 0 = hardware concurrency.
  std::size_t jobs = 0;
  bool svg = false;

  /// Throws InvalidParameter on an unusable configuration.
  void validate() const;
};

/// Standard setup for `id` (512 x 10 epochs of minibatch 32, lr 0.1) with Adam, batch-mean
/// baseline, normalized advantages, exact KL penalties).
ExperimentConfig preset(ExperimentId id);

/// Flat JSON view; run-invariant fields (out, jobs, svg) included.
nlohmann::json to_json(const ExperimentConfig& config);

/// Applies the keys of a flat JSON document on top of `base`. A present
/// "experiment" key restarts from that experiment's preset. Unknown keys throw.
ExperimentConfig apply_json(const nlohmann::json& doc, ExperimentConfig base);

/// FNV-1a hash of the fields that affect results (not out, jobs, svg or the density grid).
std::uint64_t config_hash(const ExperimentConfig& config);
std::string hex(std::uint64_t value);

std::string to_string(const RewardScaling& scaling);
RewardScaling reward_scaling_from_string(const std::string& text);

std::string surrogate_to_string(const SurrogateSpec& spec);

Environment make_environment(const ExperimentConfig& config, std::uint64_t run_seed);
PolicyParams make_initial_policy(const ExperimentConfig& config, const Environment& env);

/// Probe reward exceeds `high`, then stays below `low` for `stay` consecutive iterations.
bool detect_collapse(std::span<const IterationRecord> records, double high = 0.8, double low = 0.4,
                     std::size_t stay = 5);

/// Mean probe reward over the last 11 records (iterations 40-50 of a 50-iteration run).
double tail_probe_reward(std::span<const IterationRecord> records);

/// Mean of a Gaussian policy, mode of a Beta policy; NaN for softmax.
double policy_location(const PolicyParams& params);

struct RunVerdict {
  bool converged = false;
  bool collapsed = false;
  bool diverged = false;
  double final_reward = 0.0;
  double tail_reward = 0.0;
  double location = 0.0;
  double optimal_probability = 0.0;
};

/// Discrete: final optimal probability >= 0.95. Single peak: tail probe reward >= 0.7.
/// Double peak: final location within 0.5 of the optimal action.
RunVerdict judge(const Environment& env, const TrainResult& result);

struct RunOutcome {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  Environment env;
  TrainResult result;
  RunVerdict verdict;
};

/// Calls task(i) for i in [0, count) on up to `jobs` threads (0 = all cores).
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& task);

/// Seeded runs of one configuration; results ordered by run index.
std::vector<RunOutcome> run_experiment(const ExperimentConfig& config);

struct WilsonInterval {
  double low = 0.0;
  double high = 1.0;
};
/// Wilson score interval; z = 1.96 gives 95%.
WilsonInterval wilson_interval(std::size_t successes, std::size_t total, double z = 1.959963984540054);

struct ExperimentSummary {
  std::size_t runs = 0;
  std::size_t converged = 0;
  std::size_t collapsed = 0;
  std::size_t diverged = 0;
  double mean_final_reward = 0.0;
  double std_final_reward = 0.0;
  double convergence_fraction = 0.0;
  double collapse_fraction = 0.0;
  WilsonInterval convergence_ci;
};
ExperimentSummary summarize(std::span<const RunOutcome> runs);

struct SweepRow {
  std::size_t n = 0;
  std::string surrogate;
  std::string policy;
  std::size_t converged = 0;
  std::size_t total = 0;
  double fraction = 0.0;
  double ci_low = 0.0;
  double ci_high = 1.0;
};
/// Cross product of dimensions x surrogates; each cell runs config.runs seeds.
/// Cells sharing n share environments and training seeds.
std::vector<SweepRow> run_sweep(const ExperimentConfig& config);

using GradientFn =
    std::function<std::vector<double>(const SurrogateSpec&, const PolicyParams&, const SampleBatch&)>;

struct GradcheckCell {
  std::string surrogate;
  std::string policy;
  std::size_t checked = 0;
  std::size_t excluded = 0;
  double max_relative_error = 0.0;
  bool passed = true;
};
struct GradcheckReport {
  std::vector<GradcheckCell> cells;
  bool passed = true;
  std::size_t excluded = 0;
};

/// Analytic vs central-difference gradients over randomized configurations for
/// every surrogate (sampled and exact penalties) and policy family. Clip
/// configurations with a ratio near a kink are excluded and counted.
GradcheckReport run_gradcheck(std::uint64_t seed, std::size_t configs_per_cell = 100, double tolerance = 1e-4,
                              const GradientFn& analytic = objective_gradient);

/// Ledger of a PPO reverse-KL run against the exact MW step eta = 1/beta on the
/// true mean rewards; alpha_k is the measured projection error of each iteration.
RegretLedger ppo_rkl_ledger(const DiscreteSparseBandit& env, const TrainConfig& train);

struct DiagnoseRow {
  double action = 0.0;
  double reward = 0.0;
  double ratio = 1.0;
  double score_norm = 0.0;
  double weighting = 0.0;
  double grad_contrib = 0.0;
};
struct DiagnoseResult {
  std::vector<DiagnoseRow> rows;
  PolicyParams before;
  PolicyParams after;
};
/// One PPO iteration after `warmup_iterations`, with a per-sample dump. Scores
/// are taken at pi_old; ratios and contributions at the updated policy.
DiagnoseResult diagnose_iteration(const ExperimentConfig& config);

}  // namespace ppolab
