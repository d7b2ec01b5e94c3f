#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "ppolab/distributions.hpp"

namespace ppolab {

/// N(mu_raw, exp(log_sigma_raw)^2).
struct GaussianPolicy {
  double mu_raw = 0.0;
  double log_sigma_raw = 0.0;
};

/// Beta(softplus(x_alpha) + 1, softplus(x_beta) + 1) on [lo, hi].
struct BetaPolicy {
  double x_alpha = 0.0;
  double x_beta = 0.0;
  double lo = 0.0;
  double hi = 1.0;
};

/// softmax(logits) over |A| actions.
struct SoftmaxPolicy {
  std::vector<double> logits;
};

using PolicyParams = std::variant<GaussianPolicy, BetaPolicy, SoftmaxPolicy>;

enum class PolicyKind { kGaussian, kBeta, kSoftmax };

PolicyKind kind_of(const PolicyParams& params);
std::string to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(const std::string& name);

/// Maps raw parameters to the distribution they parameterize.
Distribution realize(const PolicyParams& params);

/// Trainable coordinates in a fixed order (lo/hi are not trainable).
std::vector<double> raw_parameters(const PolicyParams& params);
std::size_t num_parameters(const PolicyParams& params);
PolicyParams with_raw_parameters(const PolicyParams& params, std::span<const double> raw);

/// params += scale * direction, in raw coordinates.
void add_scaled(PolicyParams& params, std::span<const double> direction, double scale);

bool all_finite(const PolicyParams& params);

double log_prob(const PolicyParams& params, double action);

/// Gradient of log pi(a) in raw coordinates, chained through realize().
std::vector<double> score_raw(const PolicyParams& params, double action);

/// Same as score_raw, reusing an already realized distribution.
std::vector<double> score_raw(const PolicyParams& params, const Distribution& realized, double action);

/// grad += weight * score_raw(params, action) for every (action, weight).
/// Softmax scores share the -probs term, so this costs O(|A| + n) instead of O(|A| n).
void accumulate_weighted_scores(const PolicyParams& params, const Distribution& realized,
                                std::span<const double> actions, std::span<const double> weights,
                                std::span<double> grad);

/// Gradient in raw coordinates of the exact KL between pi_theta = realize(params)
/// and `old`: KL(old || pi_theta) for kForward, KL(pi_theta || old) for kReverse.
std::vector<double> kl_raw_gradient(const PolicyParams& params, const Distribution& old, KlDirection direction);

struct GaussianStandardInit {};
struct BetaNearUniformInit {
  double lo = -1.0;
  double hi = 1.0;
};
struct SoftmaxUniformInit {
  std::size_t num_actions = 2;
};
using PolicyInit = std::variant<GaussianStandardInit, BetaNearUniformInit, SoftmaxUniformInit>;

/// Raw value giving alpha = beta = softplus(-4) + 1, close to the uniform density.
inline constexpr double kBetaNearUniformRaw = -4.0;

PolicyParams init_policy(const PolicyInit& kind);

// pi_old for one iteration: the frozen parameters plus log pi_old of each
// collected action, cached at collection time.
class PolicySnapshot {
 public:
  PolicySnapshot(PolicyParams params, std::span<const double> actions);

  const PolicyParams& params() const { return params_; }
  const Distribution& distribution() const { return distribution_; }
  std::span<const double> old_log_probs() const { return old_log_probs_; }

 private:
  PolicyParams params_;
  Distribution distribution_;
  std::vector<double> old_log_probs_;
};

nlohmann::json to_json(const PolicyParams& params);
PolicyParams policy_from_json(const nlohmann::json& doc);

}  // namespace ppolab
