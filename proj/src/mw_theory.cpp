#include "ppolab/mw_theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "ppolab/error.hpp"

namespace ppolab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// sum_x p(x) (log a(x) - log b(x)) over the support of p.
double weighted_log_ratio(std::span<const double> p, std::span<const double> a, std::span<const double> b) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (b[i] == 0.0) return kInf;
    if (a[i] == 0.0) return -kInf;
    total += p[i] * (std::log(a[i]) - std::log(b[i]));
  }
  return total;
}

double floor_of(const ConvexFamilySpec& family) {
  if (const auto* f = std::get_if<FloorConstrainedSimplex>(&family)) return f->min_prob;
  return 0.0;
}

void require_feasible(const ConvexFamilySpec& family, std::size_t n) {
  const double floor = floor_of(family);
  if (floor < 0.0 || floor * static_cast<double>(n) > 1.0 + 1e-12) {
    throw InvalidParameter("convex family is empty: min_prob * |X| exceeds 1");
  }
}

// Visits every lattice point (multiples of `resolution`) of the family for |X| in {2, 3}.
template <class Visit>
void for_each_lattice_point(const ConvexFamilySpec& family, std::size_t n, double resolution, Visit&& visit) {
  if (n < 2 || n > 3) throw InvalidParameter("lattice search supports |X| in {2, 3} only");
  const double floor = floor_of(family);
  const auto steps = static_cast<long>(std::llround(1.0 / resolution));
  std::vector<double> p(n);
  for (long i = 0; i <= steps; ++i) {
    p[0] = static_cast<double>(i) / static_cast<double>(steps);
    if (p[0] < floor - 1e-15) continue;
    if (n == 2) {
      p[1] = static_cast<double>(steps - i) / static_cast<double>(steps);
      if (p[1] < floor - 1e-15) continue;
      visit(std::span<const double>(p));
      continue;
    }
    for (long j = 0; i + j <= steps; ++j) {
      p[1] = static_cast<double>(j) / static_cast<double>(steps);
      p[2] = static_cast<double>(steps - i - j) / static_cast<double>(steps);
      if (p[1] < floor - 1e-15 || p[2] < floor - 1e-15) continue;
      visit(std::span<const double>(p));
    }
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

}  // namespace

DiscreteDistribution::DiscreteDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw InvalidParameter("DiscreteDistribution: empty domain");
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidParameter("DiscreteDistribution: negative entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw InvalidParameter("DiscreteDistribution: entries sum to " + std::to_string(total));
  }
  for (double& p : probs_) p /= total;
}

DiscreteDistribution DiscreteDistribution::uniform(std::size_t n) {
  if (n == 0) throw InvalidParameter("uniform: empty domain");
  return DiscreteDistribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

DiscreteDistribution DiscreteDistribution::point_mass(std::size_t n, std::size_t index) {
  if (index >= n) throw InvalidParameter("point_mass: index out of range");
  std::vector<double> p(n, 0.0);
  p[index] = 1.0;
  return DiscreteDistribution(std::move(p));
}

double DiscreteDistribution::expect(std::span<const double> f) const {
  if (f.size() != probs_.size()) throw InvalidParameter("expect: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (probs_[i] != 0.0) total += probs_[i] * f[i];
  }
  return total;
}

double kl_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  if (p.size() != q.size()) throw InvalidParameter("kl_divergence: size mismatch");
  return std::max(0.0, weighted_log_ratio(p.probs(), p.probs(), q.probs()));
}

bool contains(const ConvexFamilySpec& family, const DiscreteDistribution& p, double tolerance) {
  const double floor = floor_of(family);
  return std::all_of(p.probs().begin(), p.probs().end(), [&](double v) { return v >= floor - tolerance; });
}

DiscreteDistribution mw_update(const DiscreteDistribution& pi, std::span<const double> payoffs, double eta) {
  if (payoffs.size() != pi.size()) throw InvalidParameter("mw_update: payoff size mismatch");
  double width = 0.0;
  for (double m : payoffs) {
    if (!std::isfinite(m)) throw InvalidParameter("mw_update: non-finite payoff");
    width = std::max(width, std::abs(m));
  }
  if (!(eta > 0.0) || (width > 0.0 && !(eta < 1.0 / width))) {
    throw InvalidParameter("mw_update: eta must lie in (0, 1 / max|m|)");
  }
  std::vector<double> log_w(pi.size(), -kInf);
  double peak = -kInf;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (pi[i] == 0.0) continue;
    log_w[i] = std::log(pi[i]) + eta * payoffs[i];
    peak = std::max(peak, log_w[i]);
  }
  std::vector<double> out(pi.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (pi[i] == 0.0) continue;
    out[i] = std::exp(log_w[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return DiscreteDistribution(std::move(out));
}

DiscreteDistribution i_projection(const DiscreteDistribution& q, const ConvexFamilySpec& family) {
  require_feasible(family, q.size());
  const double floor = floor_of(family);
  if (floor == 0.0 || contains(family, q, 0.0)) return q;

  // Water-filling: p(x) = max(floor, c q(x)) with c fixing the total mass.
  const std::size_t n = q.size();
  std::vector<bool> clamped(n, false);
  std::vector<double> p(n);
  for (std::size_t round = 0; round <= n; ++round) {
    std::size_t num_clamped = 0;
    double free_mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (clamped[i]) {
        ++num_clamped;
      } else {
        free_mass += q[i];
      }
    }
    const double remaining = 1.0 - floor * static_cast<double>(num_clamped);
    const double c = free_mass > 0.0 ? remaining / free_mass : 0.0;
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (clamped[i]) {
        p[i] = floor;
      } else if (c * q[i] < floor) {
        clamped[i] = true;
        changed = true;
      } else {
        p[i] = c * q[i];
      }
    }
    if (!changed) break;
  }
  return DiscreteDistribution(std::move(p));
}

DiscreteDistribution grid_i_projection(const DiscreteDistribution& q, const ConvexFamilySpec& family,
                                       double resolution) {
  require_feasible(family, q.size());
  double best = kInf;
  std::vector<double> best_p;
  for_each_lattice_point(family, q.size(), resolution, [&](std::span<const double> p) {
    const double d = weighted_log_ratio(p, p, q.probs());
    if (d < best) {
      best = d;
      best_p.assign(p.begin(), p.end());
    }
  });
  if (best_p.empty()) throw InvalidParameter("grid_i_projection: no lattice point in the family");
  return DiscreteDistribution(std::move(best_p));
}

std::vector<DiscreteDistribution> family_search_set(const ConvexFamilySpec& family, std::size_t n,
                                                    double resolution) {
  require_feasible(family, n);
  const double floor = floor_of(family);
  std::vector<DiscreteDistribution> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(n, floor);
    v[i] = 1.0 - floor * static_cast<double>(n - 1);
    out.emplace_back(std::move(v));
  }
  if (n <= 3 && n >= 2) {
    for_each_lattice_point(family, n, resolution, [&](std::span<const double> p) {
      out.emplace_back(std::vector<double>(p.begin(), p.end()));
    });
  }
  return out;
}

double measure_alpha(const DiscreteDistribution& p_exact, const DiscreteDistribution& p_approx,
                     const ConvexFamilySpec& family, const DiscreteDistribution& q, double resolution) {
  if (p_exact.size() != q.size() || p_approx.size() != q.size()) {
    throw InvalidParameter("measure_alpha: size mismatch");
  }
  if (!contains(family, p_approx, 1e-12)) throw InvalidParameter("measure_alpha: p_approx is not in the family");
  double alpha = 0.0;
  // KL(p || p_approx) - KL(p || p_exact) = sum_x p(x) log(p_exact(x) / p_approx(x)).
  for (const auto& p : family_search_set(family, q.size(), resolution)) {
    alpha = std::max(alpha, weighted_log_ratio(p.probs(), p_exact.probs(), p_approx.probs()));
  }
  return alpha;
}

BregmanCheck bregman_check(const DiscreteDistribution& p, const DiscreteDistribution& q,
                           const ConvexFamilySpec& family, double tolerance) {
  const auto projected = i_projection(q, family);
  BregmanCheck out;
  out.lhs = kl_divergence(p, projected) + kl_divergence(projected, q);
  out.rhs = kl_divergence(p, q);
  out.holds = out.lhs <= out.rhs + tolerance;
  return out;
}

double RegretLedger::alpha() const {
  double a = 0.0;
  for (const auto& t : terms) a = std::max(a, t.alpha);
  return a;
}

RegretCheck regret_check(const RegretLedger& ledger, std::size_t prefix) {
  const std::size_t k_max = prefix == 0 ? ledger.terms.size() : std::min(prefix, ledger.terms.size());
  RegretCheck out;
  if (k_max == 0) throw InvalidParameter("regret_check: empty ledger");
  const double alpha = ledger.alpha();
  double rho = 0.0;
  double gap_sum = 0.0;
  bool constant_step = true;
  out.rhs_general = ledger.initial_divergence + alpha * static_cast<double>(k_max);
  for (std::size_t k = 0; k < k_max; ++k) {
    const auto& t = ledger.terms[k];
    if (t.rho > 0.0 && !(t.eta < 1.0 / t.rho)) out.precondition_ok = false;
    if (t.eta != ledger.terms[0].eta) constant_step = false;
    out.lhs += t.eta * (t.payoff_comparator - t.payoff_current);
    out.rhs_general += t.eta * t.eta * t.second_moment;
    rho = std::max(rho, t.rho);
    gap_sum += t.payoff_max - t.payoff_current;
  }
  const double k = static_cast<double>(k_max);
  const double eta = ledger.terms[0].eta;
  out.holds = out.lhs <= out.rhs_general;
  out.average_gap = gap_sum / k;
  if (constant_step) {
    out.rhs_simplified = eta * rho * rho + alpha / eta + ledger.initial_divergence / (eta * k);
    out.rhs_discrete =
        eta * rho * rho + alpha / eta + std::log(static_cast<double>(ledger.domain_size)) / (eta * k);
    out.simplified_holds = out.lhs / (eta * k) <= out.rhs_simplified && out.average_gap <= out.rhs_discrete;
  } else {
    out.rhs_simplified = std::numeric_limits<double>::quiet_NaN();
    out.rhs_discrete = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

RegretLedger run_exact_mw(const DiscreteSparseBandit& env, std::size_t iterations, double eta) {
  const std::size_t n = env.size();
  RegretLedger ledger;
  ledger.domain_size = n;
  auto pi = DiscreteDistribution::uniform(n);
  const auto comparator = DiscreteDistribution::point_mass(n, env.optimal);
  ledger.initial_divergence = kl_divergence(comparator, pi);
  std::vector<double> payoff(n);
  for (std::size_t k = 0; k < iterations; ++k) {
    const double baseline = pi.expect(env.means);
    double rho = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      payoff[i] = env.means[i] - baseline;
      rho = std::max(rho, std::abs(payoff[i]));
    }
    if (rho > 0.0 && !(eta < 1.0 / rho)) {
      throw InvalidParameter("run_exact_mw: step size violates eta < 1 / rho (eta = " + std::to_string(eta) +
                             ", rho = " + std::to_string(rho) + ")");
    }
    std::vector<double> squared(n);
    for (std::size_t i = 0; i < n; ++i) squared[i] = payoff[i] * payoff[i];
    RegretTerm term;
    term.eta = eta;
    term.rho = rho;
    term.payoff_current = pi.expect(payoff);
    term.payoff_comparator = comparator.expect(payoff);
    term.payoff_max = *std::max_element(payoff.begin(), payoff.end());
    term.second_moment = pi.expect(squared);
    term.alpha = 0.0;
    ledger.terms.push_back(term);
    pi = mw_update(pi, payoff, eta);
  }
  return ledger;
}

std::vector<std::vector<double>> fisher_matrix(const PolicyParams& params, std::size_t n_samples, Rng& rng) {
  const std::size_t d = num_parameters(params);
  std::vector<std::vector<double>> fisher(d, std::vector<double>(d, 0.0));
  const Distribution dist = realize(params);
  auto add_outer = [&](const std::vector<double>& s, double weight) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j <= i; ++j) fisher[i][j] += weight * s[i] * s[j];
    }
  };
  auto mirror = [&] {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < i; ++j) fisher[j][i] = fisher[i][j];
    }
    return fisher;
  };
  if (const auto* c = std::get_if<Categorical>(&dist)) {
    for (std::size_t a = 0; a < c->size(); ++a) {
      if (c->probs[a] == 0.0) continue;
      add_outer(score_raw(params, dist, static_cast<double>(a)), c->probs[a]);
    }
    return mirror();
  }
  if (n_samples == 0) throw InvalidParameter("fisher_matrix: Monte Carlo needs n_samples >= 1");
  const double w = 1.0 / static_cast<double>(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) add_outer(score_raw(params, dist, sample(dist, rng)), w);
  return mirror();
}

KlTaylorCheck kl_taylor_check(const PolicyParams& params, std::span<const double> delta,
                              const std::vector<std::vector<double>>& fisher) {
  const std::size_t d = num_parameters(params);
  if (delta.size() != d || fisher.size() != d) throw InvalidParameter("kl_taylor_check: dimension mismatch");
  PolicyParams moved = params;
  add_scaled(moved, delta, 1.0);
  const Distribution old_dist = realize(params);
  const Distribution new_dist = realize(moved);
  KlTaylorCheck out;
  out.kl_forward = kl(old_dist, new_dist);
  out.kl_reverse = kl(new_dist, old_dist);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.quadratic += 0.5 * delta[i] * fisher[i][j] * delta[j];
  }
  return out;
}

RklMwEquivalence exact_rkl_equals_mw(const SoftmaxPolicy& params, std::span<const double> advantages, double beta,
                                     double gradient_tolerance, std::size_t max_steps) {
  const std::size_t n = params.logits.size();
  if (n == 0 || advantages.size() != n) throw InvalidParameter("exact_rkl_equals_mw: size mismatch");
  if (!(beta > 0.0)) throw InvalidParameter("exact_rkl_equals_mw: beta must be positive");

  const auto old_probs = softmax(params.logits);
  RklMwEquivalence out;
  out.mw_target = mw_update(DiscreteDistribution(old_probs), advantages, 1.0 / beta);

  std::vector<double> logits = params.logits;
  std::vector<double> grad(n);
  std::vector<double> h(n);
  double grad_norm = kInf;
  std::size_t step = 0;
  for (; step < max_steps; ++step) {
    const auto p = softmax(logits);
    // d/d logit_j of sum_a p_a h_a, h_a = A_a - beta (log p_a - log q_a), is p_j (h_j - E_p h).
    double mean_h = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      h[a] = advantages[a] - beta * (std::log(p[a]) - std::log(old_probs[a]));
      mean_h += p[a] * h[a];
    }
    double norm_sq = 0.0;
    double p_max = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      grad[a] = p[a] * (h[a] - mean_h);
      norm_sq += grad[a] * grad[a];
      p_max = std::max(p_max, p[a]);
    }
    grad_norm = std::sqrt(norm_sq);
    if (grad_norm <= gradient_tolerance) break;
    // The curvature of beta KL(p || q) in logits is at most beta max_a p_a.
    const double step_size = 1.0 / (beta * p_max);
    for (std::size_t a = 0; a < n; ++a) logits[a] += step_size * grad[a];
  }
  if (grad_norm > gradient_tolerance) {
    throw ConvergenceError("exact_rkl_equals_mw: ascent did not converge, gradient norm " +
                               std::to_string(grad_norm),
                           grad_norm);
  }
  out.ascent_steps = step;
  out.optimized = DiscreteDistribution(softmax(logits));
  for (std::size_t a = 0; a < n; ++a) {
    out.linf_gap = std::max(out.linf_gap, std::abs(out.optimized[a] - out.mw_target[a]));
  }
  return out;
}

}  // namespace ppolab
