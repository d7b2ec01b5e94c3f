#include "ppolab/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "ppolab/error.hpp"

namespace ppolab {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

int sign(double v) { return (v > 0.0) - (v < 0.0); }

void require_finite(double value, const char* what) {
  if (!std::isfinite(value)) throw InvalidParameter(std::string(what) + " is not finite");
}

struct ExactPenalty {
  double beta;
  KlDirection direction;
};

std::optional<ExactPenalty> exact_penalty(const SurrogateSpec& spec) {
  if (const auto* f = std::get_if<ForwardKlObjective>(&spec); f && f->penalty == KlPenalty::kExact) {
    return ExactPenalty{f->beta, KlDirection::kForward};
  }
  if (const auto* k = std::get_if<ReverseKlObjective>(&spec); k && k->penalty == KlPenalty::kExact) {
    return ExactPenalty{k->beta, KlDirection::kReverse};
  }
  return std::nullopt;
}

Distribution old_distribution(const SampleBatch& batch) {
  if (!batch.old_policy) throw InvalidParameter("exact KL penalty needs the batch's old policy");
  return realize(*batch.old_policy);
}

}  // namespace

void validate(const SurrogateSpec& spec) {
  std::visit(Overloaded{
                 [](const ClipObjective& c) {
                   if (!(c.epsilon > 0.0 && c.epsilon <= 1.0)) {
                     throw InvalidParameter("clip epsilon must lie in (0, 1]");
                   }
                 },
                 [](const ForwardKlObjective& f) {
                   if (!(f.beta > 0.0)) throw InvalidParameter("KL coefficient beta must be positive");
                 },
                 [](const ReverseKlObjective& r) {
                   if (!(r.beta > 0.0)) throw InvalidParameter("KL coefficient beta must be positive");
                 },
                 [](const UnregularizedObjective&) {},
             },
             spec);
}

std::string tag(const SurrogateSpec& spec) {
  return std::visit(Overloaded{
                        [](const ClipObjective&) { return std::string("clip"); },
                        [](const ForwardKlObjective& f) {
                          return std::string(f.penalty == KlPenalty::kExact ? "fkl_exact" : "fkl");
                        },
                        [](const ReverseKlObjective& k) {
                          return std::string(k.penalty == KlPenalty::kExact ? "rkl_exact" : "rkl");
                        },
                        [](const UnregularizedObjective&) { return std::string("unreg"); },
                    },
                    spec);
}

SurrogateSpec surrogate_from_string(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto colon = text.find(':', start);
    parts.push_back(text.substr(start, colon - start));
    if (colon == std::string::npos) break;
    start = colon + 1;
  }
  std::string name = parts[0];
  KlPenalty penalty = KlPenalty::kSampled;
  if (name.size() > 6 && name.ends_with("_exact")) {
    name.resize(name.size() - 6);
    penalty = KlPenalty::kExact;
  }
  std::optional<double> value;
  if (parts.size() >= 2 && !parts[1].empty()) {
    try {
      std::size_t used = 0;
      value = std::stod(parts[1], &used);
      if (used != parts[1].size()) throw InvalidParameter("trailing characters");
    } catch (const std::exception&) {
      throw InvalidParameter("bad surrogate parameter in '" + text + "'");
    }
  }
  if (parts.size() >= 3) {
    if (parts.size() > 3 || (parts[2] != "exact" && parts[2] != "sampled")) {
      throw InvalidParameter("bad KL penalty in '" + text + "' (expected exact or sampled)");
    }
    penalty = parts[2] == "exact" ? KlPenalty::kExact : KlPenalty::kSampled;
  }
  const bool is_kl = name == "fkl" || name == "forward_kl" || name == "rkl" || name == "reverse_kl";
  if (!is_kl && (parts.size() >= 3 || penalty == KlPenalty::kExact)) {
    throw InvalidParameter("only KL surrogates take a penalty mode: '" + text + "'");
  }
  SurrogateSpec spec;
  if (name == "clip") {
    spec = ClipObjective{value.value_or(0.2)};
  } else if (name == "fkl" || name == "forward_kl") {
    spec = ForwardKlObjective{value.value_or(3.0), penalty};
  } else if (name == "rkl" || name == "reverse_kl") {
    spec = ReverseKlObjective{value.value_or(3.0), penalty};
  } else if ((name == "unreg" || name == "none" || name == "unregularized") && !value) {
    spec = UnregularizedObjective{};
  } else {
    throw InvalidParameter("unknown surrogate '" + text + "'");
  }
  validate(spec);
  return spec;
}

void SampleBatch::validate() const {
  const std::size_t n = actions.size();
  if (n == 0) throw InvalidParameter("SampleBatch: empty batch");
  if (old_log_probs.size() != n || advantages.size() != n || rewards.size() != n) {
    throw InvalidParameter("SampleBatch: sequence lengths differ");
  }
  for (double lp : old_log_probs) require_finite(lp, "SampleBatch: old log-probability");
}

SampleBatch SampleBatch::subset(std::span<const std::size_t> indices) const {
  SampleBatch out;
  out.actions.reserve(indices.size());
  out.old_log_probs.reserve(indices.size());
  out.advantages.reserve(indices.size());
  out.rewards.reserve(indices.size());
  for (std::size_t i : indices) {
    out.actions.push_back(actions.at(i));
    out.old_log_probs.push_back(old_log_probs.at(i));
    out.advantages.push_back(advantages.at(i));
    out.rewards.push_back(rewards.at(i));
  }
  out.old_policy = old_policy;
  return out;
}

double ratio(const PolicyParams& params, const PolicySnapshot& snapshot, double action) {
  const double new_lp = log_prob(params, action);
  const double old_lp = log_prob(snapshot.distribution(), action);
  require_finite(new_lp, "ratio: current log-probability");
  require_finite(old_lp, "ratio: old log-probability");
  return std::exp(new_lp - old_lp);
}

std::vector<double> log_ratios(const Distribution& current, const SampleBatch& batch) {
  std::vector<double> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double lp = log_prob(current, batch.actions[i]);
    require_finite(lp, "log_ratios: current log-probability");
    out[i] = lp - batch.old_log_probs[i];
  }
  return out;
}

bool clip_active_mask(double epsilon, double r, double adv) {
  if (std::abs(r - 1.0) < epsilon) return true;
  if (adv == 0.0) return false;
  return sign(r - 1.0) != sign(adv);
}

bool near_clip_boundary(double epsilon, double r, double margin) {
  return std::abs(r - (1.0 - epsilon)) <= margin || std::abs(r - (1.0 + epsilon)) <= margin;
}

double gradient_coefficient(const SurrogateSpec& spec, double r, double log_r, double adv) {
  return std::visit(Overloaded{
                        [&](const ClipObjective& c) { return clip_active_mask(c.epsilon, r, adv) ? r * adv : 0.0; },
                        [&](const ForwardKlObjective& f) {
                          return f.penalty == KlPenalty::kExact ? r * adv : r * adv + f.beta;
                        },
                        [&](const ReverseKlObjective& k) {
                          return k.penalty == KlPenalty::kExact ? r * adv : r * (adv - k.beta * log_r);
                        },
                        [&](const UnregularizedObjective&) { return r * adv; },
                    },
                    spec);
}

double sample_weighting(const SurrogateSpec& spec, double r, double adv) {
  return std::visit(Overloaded{
                        [&](const ClipObjective& c) { return clip_active_mask(c.epsilon, r, adv) ? 1.0 : 0.0; },
                        [&](const ForwardKlObjective& f) {
                          if (adv == 0.0) throw InvalidParameter("sample_weighting: undefined for zero advantage");
                          return 1.0 + (f.beta / adv) * (1.0 / r - 1.0);
                        },
                        [&](const ReverseKlObjective& k) {
                          if (adv == 0.0) throw InvalidParameter("sample_weighting: undefined for zero advantage");
                          return 1.0 - (k.beta / adv) * std::log(r);
                        },
                        [&](const UnregularizedObjective&) { return 1.0; },
                    },
                    spec);
}

double objective_value(const SurrogateSpec& spec, const PolicyParams& params, const SampleBatch& batch) {
  batch.validate();
  const Distribution current = realize(params);
  const auto lr = log_ratios(current, batch);
  if (const auto penalty = exact_penalty(spec)) {
    const Distribution old = old_distribution(batch);
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) total += std::exp(lr[i]) * batch.advantages[i];
    const double divergence =
        penalty->direction == KlDirection::kReverse ? kl(current, old) : kl(old, current);
    return total / static_cast<double>(batch.size()) - penalty->beta * divergence;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double r = std::exp(lr[i]);
    const double adv = batch.advantages[i];
    total += std::visit(Overloaded{
                            [&](const ClipObjective& c) {
                              const double clipped = std::clamp(r, 1.0 - c.epsilon, 1.0 + c.epsilon);
                              return std::min(r * adv, clipped * adv);
                            },
                            // -log r is unbiased for KL(pi_old || pi) under pi_old samples.
                            [&](const ForwardKlObjective& f) { return r * adv + f.beta * lr[i]; },
                            // r log r - r + 1 is unbiased for KL(pi || pi_old) and its
                            // gradient is exactly r log r * score.
                            [&](const ReverseKlObjective& k) {
                              return r * adv - k.beta * (r * lr[i] - r + 1.0);
                            },
                            [&](const UnregularizedObjective&) { return r * adv; },
                        },
                        spec);
  }
  return total / static_cast<double>(batch.size());
}

std::vector<double> objective_gradient(const SurrogateSpec& spec, const PolicyParams& params,
                                       const SampleBatch& batch) {
  batch.validate();
  const Distribution current = realize(params);
  const auto lr = log_ratios(current, batch);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  std::vector<double> weights(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    weights[i] = inv_n * gradient_coefficient(spec, std::exp(lr[i]), lr[i], batch.advantages[i]);
  }
  std::vector<double> grad(num_parameters(params), 0.0);
  accumulate_weighted_scores(params, current, batch.actions, weights, grad);
  if (const auto penalty = exact_penalty(spec)) {
    const auto kl_grad = kl_raw_gradient(params, old_distribution(batch), penalty->direction);
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] -= penalty->beta * kl_grad[j];
  }
  return grad;
}

std::vector<double> fd_gradient(const SurrogateSpec& spec, const PolicyParams& params, const SampleBatch& batch,
                                double h) {
  if (!(h > 0.0)) throw InvalidParameter("fd_gradient: step must be positive");
  auto raw = raw_parameters(params);
  std::vector<double> grad(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j) {
    const double saved = raw[j];
    raw[j] = saved + h;
    const double up = objective_value(spec, with_raw_parameters(params, raw), batch);
    raw[j] = saved - h;
    const double down = objective_value(spec, with_raw_parameters(params, raw), batch);
    raw[j] = saved;
    grad[j] = (up - down) / (2.0 * h);
  }
  return grad;
}

std::vector<double> kl_gradient_gap(const PolicyParams& params, const SampleBatch& batch) {
  batch.validate();
  const Distribution current = realize(params);
  const auto lr = log_ratios(current, batch);
  const double scale = 0.5 / static_cast<double>(batch.size());
  std::vector<double> weights(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double d = std::expm1(lr[i]);
    weights[i] = scale * d * d;
  }
  std::vector<double> grad(num_parameters(params), 0.0);
  accumulate_weighted_scores(params, current, batch.actions, weights, grad);
  return grad;
}

double forward_kl_estimate(std::span<const double> log_ratios) {
  if (log_ratios.empty()) return 0.0;
  double total = 0.0;
  for (double lr : log_ratios) total += std::expm1(lr) - lr;
  return total / static_cast<double>(log_ratios.size());
}

double reverse_kl_estimate(std::span<const double> log_ratios) {
  if (log_ratios.empty()) return 0.0;
  double total = 0.0;
  for (double lr : log_ratios) {
    const double r = std::exp(lr);
    total += r * lr - std::expm1(lr);
  }
  return total / static_cast<double>(log_ratios.size());
}

}  // namespace ppolab
