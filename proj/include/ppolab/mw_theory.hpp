#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "ppolab/envs.hpp"
#include "ppolab/policy.hpp"
#include "ppolab/rng.hpp"

namespace ppolab {

// Probability vector over a finite domain.
class DiscreteDistribution {
 public:
  DiscreteDistribution() = default;
  /// Throws unless entries are non-negative and sum to 1 within 1e-12 (after
  /// renormalizing sums within 1e-9).
  explicit DiscreteDistribution(std::vector<double> probs);

  static DiscreteDistribution uniform(std::size_t n);
  static DiscreteDistribution point_mass(std::size_t n, std::size_t index);

  std::span<const double> probs() const { return probs_; }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::size_t size() const { return probs_.size(); }

  /// Expectation of f under this distribution.
  double expect(std::span<const double> f) const;

 private:
  std::vector<double> probs_;
};

/// KL(p || q) with the 0 log 0 = 0 convention; +inf when p puts mass where q does not.
double kl_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q);

struct FullSimplex {};
/// {p : p(x) >= min_prob for all x}; nonempty iff min_prob * |X| <= 1.
struct FloorConstrainedSimplex {
  double min_prob = 0.0;
};
using ConvexFamilySpec = std::variant<FullSimplex, FloorConstrainedSimplex>;

bool contains(const ConvexFamilySpec& family, const DiscreteDistribution& p, double tolerance = 1e-12);

/// pi(x) e^{eta m(x)} / Z, with log-sum-exp normalization. Requires
/// 0 < eta < 1 / max|m| (any eta > 0 when m is identically zero).
DiscreteDistribution mw_update(const DiscreteDistribution& pi, std::span<const double> payoffs, double eta);

/// argmin_{p in family} KL(p || q). Floor-constrained families use water-filling.
DiscreteDistribution i_projection(const DiscreteDistribution& q, const ConvexFamilySpec& family);

/// Brute-force projection over a lattice of the family, |X| <= 3 only.
DiscreteDistribution grid_i_projection(const DiscreteDistribution& q, const ConvexFamilySpec& family,
                                       double resolution);

/// Family members used as the search set for alpha and the Bregman checks:
/// the family vertices, plus a lattice at `resolution` when |X| <= 3.
std::vector<DiscreteDistribution> family_search_set(const ConvexFamilySpec& family, std::size_t n,
                                                    double resolution = 1e-3);

/// Smallest alpha >= 0 with KL(p || p_approx) <= KL(p || p_exact) + alpha over the search set.
double measure_alpha(const DiscreteDistribution& p_exact, const DiscreteDistribution& p_approx,
                     const ConvexFamilySpec& family, const DiscreteDistribution& q, double resolution = 1e-3);

struct BregmanCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};
/// KL(p || proj q) + KL(proj q || q) <= KL(p || q) + tolerance.
BregmanCheck bregman_check(const DiscreteDistribution& p, const DiscreteDistribution& q,
                           const ConvexFamilySpec& family, double tolerance = 0.0);

// One row of the regret inequality.
struct RegretTerm {
  double eta = 0.0;
  double rho = 0.0;
  double payoff_current = 0.0;     // E_{pi_k}[m_k]
  double payoff_comparator = 0.0;  // E_{pi*}[m_k]
  double payoff_max = 0.0;         // max_x m_k(x)
  double second_moment = 0.0;      // E_{pi_k}[m_k^2]
  double alpha = 0.0;
};

struct RegretLedger {
  std::vector<RegretTerm> terms;
  double initial_divergence = 0.0;  // KL(pi* || pi_0)
  std::size_t domain_size = 0;

  std::size_t iterations() const { return terms.size(); }
  /// Largest alpha observed; the per-round alpha used in the bound.
  double alpha() const;
};

struct RegretCheck {
  double lhs = 0.0;
  double rhs_general = 0.0;
  /// Constant-step bound eta rho^2 + alpha / eta + KL / (eta K); NaN if steps vary.
  double rhs_simplified = 0.0;
  /// (1/K) sum (max m_k - E_{pi_k} m_k) against eta rho^2 + alpha/eta + log|X| / (eta K).
  double average_gap = 0.0;
  double rhs_discrete = 0.0;
  bool holds = false;
  bool simplified_holds = false;
  bool precondition_ok = true;
};

/// Evaluates the inequality on the first `prefix` rounds (all rounds when 0).
RegretCheck regret_check(const RegretLedger& ledger, std::size_t prefix = 0);

/// Full-information exact MW on a bandit: m_k = mean reward - E_{pi_k}[mean reward],
/// comparator = point mass on the optimal action, pi_0 uniform.
RegretLedger run_exact_mw(const DiscreteSparseBandit& env, std::size_t iterations, double eta);

/// E_{a ~ pi}[score_raw score_raw^T]; exact for softmax, Monte Carlo otherwise.
std::vector<std::vector<double>> fisher_matrix(const PolicyParams& params, std::size_t n_samples, Rng& rng);

struct KlTaylorCheck {
  double kl_forward = 0.0;  // KL(pi_theta || pi_{theta + delta})
  double kl_reverse = 0.0;  // KL(pi_{theta + delta} || pi_theta)
  double quadratic = 0.0;   // 0.5 delta^T F delta
};
KlTaylorCheck kl_taylor_check(const PolicyParams& params, std::span<const double> delta,
                              const std::vector<std::vector<double>>& fisher);

struct RklMwEquivalence {
  DiscreteDistribution mw_target;
  DiscreteDistribution optimized;
  double linf_gap = 0.0;
  std::size_t ascent_steps = 0;
};

/// Maximizes the exact reverse-KL objective sum_a pi(a) A(a) - beta KL(pi || pi_old)
/// over softmax logits by gradient ascent and compares with mw_update(pi_old, A, 1/beta).
RklMwEquivalence exact_rkl_equals_mw(const SoftmaxPolicy& params, std::span<const double> advantages, double beta,
                                     double gradient_tolerance = 1e-10, std::size_t max_steps = 2'000'000);

}  // namespace ppolab
