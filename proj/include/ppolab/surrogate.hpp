#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ppolab/policy.hpp"

namespace ppolab {

// How the KL penalty of the regularized objectives is evaluated. kSampled uses
// per-sample estimators over pi_old draws; kExact uses the closed-form KL
// between pi_theta and the frozen pi_old (requires SampleBatch::old_policy).
enum class KlPenalty { kSampled, kExact };

struct ClipObjective {
  double epsilon = 0.2;
};
struct ForwardKlObjective {
  double beta = 3.0;
  KlPenalty penalty = KlPenalty::kSampled;
};
struct ReverseKlObjective {
  double beta = 3.0;
  KlPenalty penalty = KlPenalty::kSampled;
};
struct UnregularizedObjective {};

using SurrogateSpec = std::variant<ClipObjective, ForwardKlObjective, ReverseKlObjective, UnregularizedObjective>;

/// Validates epsilon in (0, 1] and beta > 0.
void validate(const SurrogateSpec& spec);

/// Short tag: "clip", "fkl", "rkl" or "unreg"; exact-penalty variants get an "_exact" suffix.
std::string tag(const SurrogateSpec& spec);

/// Parses "clip", "clip:0.2", "fkl:3", "rkl", "rkl:3:exact", "rkl_exact", "unreg";
/// defaults are epsilon 0.2, beta 3 and the sampled penalty.
SurrogateSpec surrogate_from_string(const std::string& text);

// Samples collected under pi_old. Discrete actions are stored as indices.
struct SampleBatch {
  std::vector<double> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> rewards;
  /// Frozen pi_old, needed only by exact KL penalties.
  std::optional<PolicyParams> old_policy;

  std::size_t size() const { return actions.size(); }
  /// Throws unless all sequences have equal nonzero length and old log-probs are finite.
  void validate() const;
  /// Rows selected by `indices`, in that order.
  SampleBatch subset(std::span<const std::size_t> indices) const;
};

/// r(a) = pi_theta(a) / pi_old(a), computed in log space.
double ratio(const PolicyParams& params, const PolicySnapshot& snapshot, double action);

/// log r for every sample of the batch.
std::vector<double> log_ratios(const Distribution& current, const SampleBatch& batch);

/// Indicator 1{|r - 1| < eps or sgn(r - 1) != sgn(adv)} of the clipped gradient.
bool clip_active_mask(double epsilon, double r, double adv);

/// Whether r lies within `margin` of the kink points 1 - eps or 1 + eps.
bool near_clip_boundary(double epsilon, double r, double margin);

/// Per-sample coefficient c with grad = mean(c * score_raw).
double gradient_coefficient(const SurrogateSpec& spec, double r, double log_r, double adv);

/// Table weighting of one example, normalized to 1 at r = 1.
double sample_weighting(const SurrogateSpec& spec, double r, double adv);

double objective_value(const SurrogateSpec& spec, const PolicyParams& params, const SampleBatch& batch);

std::vector<double> objective_gradient(const SurrogateSpec& spec, const PolicyParams& params,
                                       const SampleBatch& batch);

/// Central differences of objective_value in raw parameters.
std::vector<double> fd_gradient(const SurrogateSpec& spec, const PolicyParams& params, const SampleBatch& batch,
                                double h);

/// Monte Carlo 0.5 * E_old[(r - 1)^2 score_raw]: second-order gap between the
/// gradients of KL(pi || pi_old) and KL(pi_old || pi).
std::vector<double> kl_gradient_gap(const PolicyParams& params, const SampleBatch& batch);

// Nonnegative per-sample KL estimators used for diagnostics:
// forward  KL(pi_old || pi) ~ mean(r - 1 - log r)
// reverse  KL(pi || pi_old) ~ mean(r log r - r + 1)
double forward_kl_estimate(std::span<const double> log_ratios);
double reverse_kl_estimate(std::span<const double> log_ratios);

}  // namespace ppolab
