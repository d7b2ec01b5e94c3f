#include "ppolab/distributions.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ppolab/error.hpp"
#include "ppolab/rng.hpp"
#include "ppolab/special_functions.hpp"

namespace ppolab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kSimplexTolerance = 1e-9;

// (c - 1) * log(x), with the 0 * log 0 = 0 convention at c = 1.
double power_term(double c, double x) {
  if (c == 1.0) return 0.0;
  if (x <= 0.0) return kNegInf;
  return (c - 1.0) * std::log(x);
}

}  // namespace

Gaussian1D::Gaussian1D(double mu_, double sigma_) : mu(mu_), sigma(sigma_) {
  if (!std::isfinite(mu) || !(sigma > 0.0) || !std::isfinite(sigma)) {
    throw InvalidParameter("Gaussian1D: need finite mu and sigma > 0, got sigma = " +
                           std::to_string(sigma));
  }
}

ScaledBeta::ScaledBeta(double alpha_, double beta_, double lo_, double hi_)
    : alpha(alpha_), beta(beta_), lo(lo_), hi(hi_) {
  if (!(alpha >= 1.0) || !(beta >= 1.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw InvalidParameter("ScaledBeta: alpha and beta must be finite and >= 1");
  }
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw InvalidParameter("ScaledBeta: bounds must satisfy lo < hi");
  }
}

double ScaledBeta::mean() const { return from_unit(alpha / (alpha + beta)); }

double ScaledBeta::mode() const {
  const double denom = alpha + beta - 2.0;
  if (denom <= 0.0) return from_unit(0.5);
  return from_unit((alpha - 1.0) / denom);
}

Categorical::Categorical(std::vector<double> p) : probs(std::move(p)) {
  if (probs.empty()) throw InvalidParameter("Categorical: empty probability vector");
  double total = 0.0;
  for (double v : probs) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidParameter("Categorical: negative entry");
    total += v;
  }
  if (std::abs(total - 1.0) > kSimplexTolerance) {
    throw InvalidParameter("Categorical: probabilities sum to " + std::to_string(total));
  }
}

double log_prob(const Gaussian1D& d, double a) {
  const double z = (a - d.mu) / d.sigma;
  return -0.5 * z * z - std::log(d.sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double log_prob(const ScaledBeta& d, double a) {
  const double x = d.to_unit(a);
  if (x < 0.0 || x > 1.0) return kNegInf;
  return power_term(d.alpha, x) + power_term(d.beta, 1.0 - x) - log_beta_function(d.alpha, d.beta) -
         std::log(d.hi - d.lo);
}

double log_prob(const Categorical& d, std::size_t index) {
  if (index >= d.probs.size()) {
    throw InvalidParameter("Categorical::log_prob: index " + std::to_string(index) + " out of range");
  }
  return std::log(d.probs[index]);
}

double log_prob(const Distribution& d, double action) {
  return std::visit(
      [action](const auto& dist) -> double {
        using T = std::decay_t<decltype(dist)>;
        if constexpr (std::is_same_v<T, Categorical>) {
          if (!(action >= 0.0)) throw InvalidParameter("Categorical::log_prob: negative index");
          return log_prob(dist, static_cast<std::size_t>(action));
        } else {
          return log_prob(dist, action);
        }
      },
      d);
}

std::vector<double> score(const Gaussian1D& d, double a) {
  const double diff = a - d.mu;
  const double var = d.sigma * d.sigma;
  return {diff / var, (diff * diff - var) / (var * d.sigma)};
}

std::vector<double> score(const ScaledBeta& d, double a) {
  const double x = d.to_unit(a);
  if ((x <= 0.0 && d.alpha > 1.0) || (x >= 1.0 && d.beta > 1.0) || x < 0.0 || x > 1.0) {
    throw InvalidParameter("ScaledBeta::score: action on or outside the support boundary");
  }
  const double common = digamma(d.alpha + d.beta);
  return {std::log(x) - digamma(d.alpha) + common, std::log1p(-x) - digamma(d.beta) + common};
}

double kl(const Gaussian1D& p, const Gaussian1D& q) {
  const double ratio = p.sigma / q.sigma;
  const double diff = (p.mu - q.mu) / q.sigma;
  return -std::log(ratio) + 0.5 * (ratio * ratio + diff * diff) - 0.5;
}

double kl(const ScaledBeta& p, const ScaledBeta& q) {
  if (p.lo != q.lo || p.hi != q.hi) throw InvalidParameter("kl: Beta bounds differ");
  const double a1 = p.alpha, b1 = p.beta, a2 = q.alpha, b2 = q.beta;
  const double value = log_beta_function(a2, b2) - log_beta_function(a1, b1) + (a1 - a2) * digamma(a1) +
                       (b1 - b2) * digamma(b1) + (a2 - a1 + b2 - b1) * digamma(a1 + b1);
  return std::max(value, 0.0);
}

double kl(const Categorical& p, const Categorical& q) {
  if (p.size() != q.size()) throw InvalidParameter("kl: categorical sizes differ");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.probs[i] == 0.0) continue;
    if (q.probs[i] == 0.0) return std::numeric_limits<double>::infinity();
    total += p.probs[i] * (std::log(p.probs[i]) - std::log(q.probs[i]));
  }
  return std::max(total, 0.0);
}

double kl(const Distribution& p, const Distribution& q, KlDirection direction) {
  if (p.index() != q.index()) throw InvalidParameter("kl: distribution families differ");
  const Distribution& from = direction == KlDirection::kForward ? p : q;
  const Distribution& to = direction == KlDirection::kForward ? q : p;
  return std::visit(
      [&to](const auto& a) -> double {
        using T = std::decay_t<decltype(a)>;
        return kl(a, std::get<T>(to));
      },
      from);
}

double sample(const Distribution& d, Rng& rng) {
  return std::visit(
      [&rng](const auto& dist) -> double {
        using T = std::decay_t<decltype(dist)>;
        if constexpr (std::is_same_v<T, Gaussian1D>) {
          return sample_normal(rng, dist.mu, dist.sigma);
        } else if constexpr (std::is_same_v<T, ScaledBeta>) {
          return dist.from_unit(sample_beta(rng, dist.alpha, dist.beta));
        } else {
          return static_cast<double>(sample_categorical(rng, dist.probs));
        }
      },
      d);
}

}  // namespace ppolab
