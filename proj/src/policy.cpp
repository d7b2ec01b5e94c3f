#include "ppolab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ppolab/error.hpp"
#include "ppolab/special_functions.hpp"

namespace ppolab {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::vector<double> softmax(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> probs(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - peak);
    total += probs[i];
  }
  for (double& p : probs) p /= total;
  return probs;
}

std::size_t discrete_index(double action, std::size_t size) {
  if (!(action >= 0.0) || action != std::floor(action) || action >= static_cast<double>(size)) {
    throw InvalidParameter("softmax policy: action is not a valid index");
  }
  return static_cast<std::size_t>(action);
}

}  // namespace

PolicyKind kind_of(const PolicyParams& params) {
  return std::visit(Overloaded{[](const GaussianPolicy&) { return PolicyKind::kGaussian; },
                               [](const BetaPolicy&) { return PolicyKind::kBeta; },
                               [](const SoftmaxPolicy&) { return PolicyKind::kSoftmax; }},
                    params);
}

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kGaussian:
      return "gaussian";
    case PolicyKind::kBeta:
      return "beta";
    case PolicyKind::kSoftmax:
      return "softmax";
  }
  return "unknown";
}

PolicyKind policy_kind_from_string(const std::string& name) {
  if (name == "gaussian") return PolicyKind::kGaussian;
  if (name == "beta") return PolicyKind::kBeta;
  if (name == "softmax") return PolicyKind::kSoftmax;
  throw InvalidParameter("unknown policy kind '" + name + "'");
}

bool all_finite(const PolicyParams& params) {
  const auto raw = raw_parameters(params);
  return std::all_of(raw.begin(), raw.end(), [](double v) { return std::isfinite(v); });
}

Distribution realize(const PolicyParams& params) {
  if (!all_finite(params)) throw InvalidParameter("realize: non-finite raw parameters");
  return std::visit(
      Overloaded{
          [](const GaussianPolicy& p) -> Distribution {
            return Gaussian1D(p.mu_raw, std::exp(p.log_sigma_raw));
          },
          [](const BetaPolicy& p) -> Distribution {
            return ScaledBeta(softplus(p.x_alpha) + 1.0, softplus(p.x_beta) + 1.0, p.lo, p.hi);
          },
          [](const SoftmaxPolicy& p) -> Distribution {
            if (p.logits.empty()) throw InvalidParameter("realize: softmax policy without actions");
            Categorical c;
            c.probs = softmax(p.logits);
            return c;
          },
      },
      params);
}

std::vector<double> raw_parameters(const PolicyParams& params) {
  return std::visit(Overloaded{
                        [](const GaussianPolicy& p) { return std::vector<double>{p.mu_raw, p.log_sigma_raw}; },
                        [](const BetaPolicy& p) { return std::vector<double>{p.x_alpha, p.x_beta}; },
                        [](const SoftmaxPolicy& p) { return p.logits; },
                    },
                    params);
}

std::size_t num_parameters(const PolicyParams& params) {
  if (const auto* s = std::get_if<SoftmaxPolicy>(&params)) return s->logits.size();
  return 2;
}

PolicyParams with_raw_parameters(const PolicyParams& params, std::span<const double> raw) {
  if (raw.size() != num_parameters(params)) throw InvalidParameter("with_raw_parameters: size mismatch");
  PolicyParams out = params;
  std::visit(Overloaded{
                 [&](GaussianPolicy& p) {
                   p.mu_raw = raw[0];
                   p.log_sigma_raw = raw[1];
                 },
                 [&](BetaPolicy& p) {
                   p.x_alpha = raw[0];
                   p.x_beta = raw[1];
                 },
                 [&](SoftmaxPolicy& p) { std::copy(raw.begin(), raw.end(), p.logits.begin()); },
             },
             out);
  return out;
}

void add_scaled(PolicyParams& params, std::span<const double> direction, double scale) {
  if (direction.size() != num_parameters(params)) throw InvalidParameter("add_scaled: size mismatch");
  std::visit(Overloaded{
                 [&](GaussianPolicy& p) {
                   p.mu_raw += scale * direction[0];
                   p.log_sigma_raw += scale * direction[1];
                 },
                 [&](BetaPolicy& p) {
                   p.x_alpha += scale * direction[0];
                   p.x_beta += scale * direction[1];
                 },
                 [&](SoftmaxPolicy& p) {
                   for (std::size_t i = 0; i < p.logits.size(); ++i) p.logits[i] += scale * direction[i];
                 },
             },
             params);
}

double log_prob(const PolicyParams& params, double action) { return log_prob(realize(params), action); }

std::vector<double> score_raw(const PolicyParams& params, double action) {
  return score_raw(params, realize(params), action);
}

std::vector<double> score_raw(const PolicyParams& params, const Distribution& realized, double action) {
  return std::visit(
      Overloaded{
          [&](const GaussianPolicy&) {
            const auto& g = std::get<Gaussian1D>(realized);
            auto s = score(g, action);
            s[1] *= g.sigma;  // d sigma / d log_sigma_raw = sigma
            return s;
          },
          [&](const BetaPolicy& p) {
            auto s = score(std::get<ScaledBeta>(realized), action);
            s[0] *= sigmoid(p.x_alpha);
            s[1] *= sigmoid(p.x_beta);
            return s;
          },
          [&](const SoftmaxPolicy&) {
            const auto& c = std::get<Categorical>(realized);
            std::vector<double> s(c.size());
            for (std::size_t i = 0; i < s.size(); ++i) s[i] = -c.probs[i];
            s[discrete_index(action, c.size())] += 1.0;
            return s;
          },
      },
      params);
}

void accumulate_weighted_scores(const PolicyParams& params, const Distribution& realized,
                                std::span<const double> actions, std::span<const double> weights,
                                std::span<double> grad) {
  if (actions.size() != weights.size() || grad.size() != num_parameters(params)) {
    throw InvalidParameter("accumulate_weighted_scores: size mismatch");
  }
  if (const auto* c = std::get_if<Categorical>(&realized)) {
    double weight_sum = 0.0;
    for (std::size_t i = 0; i < actions.size(); ++i) {
      grad[discrete_index(actions[i], c->size())] += weights[i];
      weight_sum += weights[i];
    }
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] -= weight_sum * c->probs[j];
    return;
  }
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (weights[i] == 0.0) continue;
    const auto s = score_raw(params, realized, actions[i]);
    grad[0] += weights[i] * s[0];
    grad[1] += weights[i] * s[1];
  }
}

std::vector<double> kl_raw_gradient(const PolicyParams& params, const Distribution& old, KlDirection direction) {
  const bool reverse = direction == KlDirection::kReverse;
  const Distribution current = realize(params);
  return std::visit(
      Overloaded{
          [&](const GaussianPolicy& p) {
            const auto& q = std::get<Gaussian1D>(old);
            const double sigma = std::exp(p.log_sigma_raw);
            const double d = p.mu_raw - q.mu;
            if (reverse) {
              return std::vector<double>{d / (q.sigma * q.sigma), sigma * sigma / (q.sigma * q.sigma) - 1.0};
            }
            const double var = sigma * sigma;
            return std::vector<double>{d / var, 1.0 - (q.sigma * q.sigma + d * d) / var};
          },
          [&](const BetaPolicy& p) {
            const auto& cur = std::get<ScaledBeta>(current);
            const auto& q = std::get<ScaledBeta>(old);
            const double a = cur.alpha;
            const double b = cur.beta;
            double ga = 0.0;
            double gb = 0.0;
            if (reverse) {
              const double shared = (q.alpha + q.beta - a - b) * trigamma(a + b);
              ga = (a - q.alpha) * trigamma(a) + shared;
              gb = (b - q.beta) * trigamma(b) + shared;
            } else {
              const double shared = digamma(q.alpha + q.beta) - digamma(a + b);
              ga = digamma(a) - digamma(q.alpha) + shared;
              gb = digamma(b) - digamma(q.beta) + shared;
            }
            return std::vector<double>{ga * sigmoid(p.x_alpha), gb * sigmoid(p.x_beta)};
          },
          [&](const SoftmaxPolicy&) {
            const auto& cur = std::get<Categorical>(current).probs;
            const auto& q = std::get<Categorical>(old).probs;
            if (q.size() != cur.size()) throw InvalidParameter("kl_raw_gradient: action count mismatch");
            std::vector<double> grad(cur.size());
            if (!reverse) {
              for (std::size_t j = 0; j < cur.size(); ++j) grad[j] = cur[j] - q[j];
              return grad;
            }
            // d/dz_j sum_a p_a log(p_a / q_a) = p_j (h_j - E_p h), h = log p - log q.
            double mean_h = 0.0;
            for (std::size_t j = 0; j < cur.size(); ++j) {
              if (cur[j] == 0.0) continue;
              grad[j] = std::log(cur[j]) - std::log(q[j]);
              mean_h += cur[j] * grad[j];
            }
            for (std::size_t j = 0; j < cur.size(); ++j) grad[j] = cur[j] * (grad[j] - mean_h);
            return grad;
          },
      },
      params);
}

PolicyParams init_policy(const PolicyInit& kind) {
  return std::visit(Overloaded{
                        [](const GaussianStandardInit&) -> PolicyParams { return GaussianPolicy{0.0, 0.0}; },
                        [](const BetaNearUniformInit& b) -> PolicyParams {
                          if (!(b.lo < b.hi)) throw InvalidParameter("init_policy: need lo < hi");
                          return BetaPolicy{kBetaNearUniformRaw, kBetaNearUniformRaw, b.lo, b.hi};
                        },
                        [](const SoftmaxUniformInit& s) -> PolicyParams {
                          if (s.num_actions == 0) throw InvalidParameter("init_policy: zero actions");
                          return SoftmaxPolicy{std::vector<double>(s.num_actions, 0.0)};
                        },
                    },
                    kind);
}

PolicySnapshot::PolicySnapshot(PolicyParams params, std::span<const double> actions)
    : params_(std::move(params)), distribution_(realize(params_)) {
  old_log_probs_.reserve(actions.size());
  for (double a : actions) {
    const double lp = log_prob(distribution_, a);
    if (!std::isfinite(lp)) throw InvalidParameter("PolicySnapshot: action has zero probability under pi_old");
    old_log_probs_.push_back(lp);
  }
}

nlohmann::json to_json(const PolicyParams& params) {
  nlohmann::json doc;
  doc["kind"] = to_string(kind_of(params));
  doc["params"] = raw_parameters(params);
  if (const auto* b = std::get_if<BetaPolicy>(&params)) {
    doc["lo"] = b->lo;
    doc["hi"] = b->hi;
  }
  return doc;
}

PolicyParams policy_from_json(const nlohmann::json& doc) {
  const auto kind = policy_kind_from_string(doc.at("kind").get<std::string>());
  const auto raw = doc.at("params").get<std::vector<double>>();
  switch (kind) {
    case PolicyKind::kGaussian:
      if (raw.size() != 2) throw InvalidParameter("gaussian policy needs 2 parameters");
      return GaussianPolicy{raw[0], raw[1]};
    case PolicyKind::kBeta:
      if (raw.size() != 2) throw InvalidParameter("beta policy needs 2 parameters");
      return BetaPolicy{raw[0], raw[1], doc.at("lo").get<double>(), doc.at("hi").get<double>()};
    case PolicyKind::kSoftmax:
      if (raw.empty()) throw InvalidParameter("softmax policy needs at least one logit");
      return SoftmaxPolicy{raw};
  }
  throw InvalidParameter("unreachable policy kind");
}

}  // namespace ppolab
