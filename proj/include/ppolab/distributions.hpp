#pragma once

#include <cstddef>
#include <variant>
#include <vector>

namespace ppolab {

struct Gaussian1D {
  double mu = 0.0;
  double sigma = 1.0;

  Gaussian1D() = default;
  Gaussian1D(double mu, double sigma);
};

// Beta(alpha, beta) stretched onto [lo, hi].
struct ScaledBeta {
  double alpha = 1.0;
  double beta = 1.0;
  double lo = 0.0;
  double hi = 1.0;

  ScaledBeta() = default;
  ScaledBeta(double alpha, double beta, double lo, double hi);

  double to_unit(double a) const { return (a - lo) / (hi - lo); }
  double from_unit(double x) const { return lo + (hi - lo) * x; }
  double mean() const;
  /// Mode in action units; the interval midpoint when alpha = beta = 1.
  double mode() const;
};

struct Categorical {
  std::vector<double> probs;

  Categorical() = default;
  explicit Categorical(std::vector<double> probs);

  std::size_t size() const { return probs.size(); }
};

using Distribution = std::variant<Gaussian1D, ScaledBeta, Categorical>;

enum class KlDirection {
  kForward,  ///< KL(p || q)
  kReverse,  ///< KL(q || p)
};

// Log density (continuous) or log mass (discrete). Discrete actions are
// passed as their index. Out-of-support Beta actions yield -infinity.
double log_prob(const Gaussian1D& d, double a);
double log_prob(const ScaledBeta& d, double a);
double log_prob(const Categorical& d, std::size_t index);
double log_prob(const Distribution& d, double action);

/// d/d(mu, sigma) log N(a; mu, sigma^2).
std::vector<double> score(const Gaussian1D& d, double a);
/// d/d(alpha, beta) log Beta density; a must be interior when alpha or beta > 1.
std::vector<double> score(const ScaledBeta& d, double a);

/// Analytic KL(p || q) for kForward and KL(q || p) for kReverse.
double kl(const Distribution& p, const Distribution& q, KlDirection direction = KlDirection::kForward);
double kl(const Gaussian1D& p, const Gaussian1D& q);
double kl(const ScaledBeta& p, const ScaledBeta& q);
double kl(const Categorical& p, const Categorical& q);

/// Draw one action; discrete actions are returned as their index.
class Rng;
double sample(const Distribution& d, Rng& rng);

}  // namespace ppolab
