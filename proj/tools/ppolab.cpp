// ppolab command-line front end.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "ppolab/error.hpp"
#include "ppolab/experiments.hpp"
#include "ppolab/report.hpp"

namespace fs = std::filesystem;
using namespace ppolab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAssertion = 1;
constexpr int kExitConfig = 2;

// Raised for a failed check; maps to exit code 1.
struct AssertionFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string config_path;
  std::optional<std::string> experiment;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> runs;
  std::optional<std::string> out;
  std::optional<std::size_t> jobs;
  bool svg = false;
  std::optional<std::string> policy;
  std::optional<std::string> surrogate;
  std::optional<double> learning_rate;
  std::optional<std::size_t> actions;
  std::optional<std::size_t> iterations;
  std::optional<double> eta;
  std::size_t points = 301;
  bool inject_sign_error = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_path, "flat JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--experiment", f.experiment,
                  "failure1, failure1_wide, failure2, failure3, action_sweep, lr_ablation, scaling_ablation");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--runs", f.runs, "number of seeded runs");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--jobs", f.jobs, "worker threads (default: all cores)");
  cmd->add_flag("--svg", f.svg, "also write SVG plots");
  cmd->add_option("--policy", f.policy, "gaussian, beta or softmax");
  cmd->add_option("--surrogate", f.surrogate, "clip[:eps], fkl[:beta[:exact|sampled]], rkl[...], unreg");
  cmd->add_option("--lr", f.learning_rate, "learning rate");
  cmd->add_option("--actions", f.actions, "action count of discrete experiments");
  cmd->add_option("--iterations", f.iterations, "PPO iterations per run");
}

ExperimentConfig resolve(const Flags& f, ExperimentId fallback) {
  ExperimentConfig c = preset(f.experiment ? experiment_from_string(*f.experiment) : fallback);
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidParameter("cannot parse " + f.config_path + ": " + e.what());
    }
    if (f.experiment && doc.is_object()) doc.erase("experiment");
    c = apply_json(doc, c);
  }
  if (f.seed) c.seed = *f.seed;
  if (f.runs) c.runs = *f.runs;
  if (f.out) c.out_dir = *f.out;
  if (f.jobs) c.jobs = *f.jobs;
  if (f.svg) c.svg = true;
  if (f.policy) c.policy = policy_kind_from_string(*f.policy);
  if (f.surrogate) c.train.surrogate = surrogate_from_string(*f.surrogate);
  if (f.learning_rate) c.train.learning_rate = *f.learning_rate;
  if (f.actions) c.num_actions = *f.actions;
  if (f.iterations) c.train.iterations = *f.iterations;
  if (f.eta) c.eta = *f.eta;
  c.validate();
  return c;
}

std::string render(const auto& writer) {
  std::ostringstream s;
  writer(s);
  return s.str();
}

int cmd_run(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  if (c.svg && !is_discrete_experiment(c.experiment) && c.train.density_grid_points == 0) {
    c.train.density_grid_points = 121;
  }
  const std::string started = utc_now();
  const auto runs = run_experiment(c);
  const fs::path out = c.out_dir;
  std::vector<ManifestRun> manifest;
  for (const auto& r : runs) {
    char name[32];
    std::snprintf(name, sizeof name, "run_%03zu.csv", r.index);
    const fs::path path = out / "runs" / name;
    write_file(path, render([&](std::ostream& s) { write_iterations_csv(s, c, r.result.records); }));
    manifest.push_back({r.index, r.seed, (fs::path("runs") / name).string(), r.verdict});
  }
  const auto summary = summarize(runs);
  write_file(out / "summary.json", summary_json(c, summary).dump(2) + "\n");
  if (c.svg) {
    std::vector<Series> series;
    for (const auto& r : runs) {
      Series s;
      s.label = runs.size() <= 10 ? "run " + std::to_string(r.index) : "";
      for (const auto& rec : r.result.records) {
        s.x.push_back(static_cast<double>(rec.iteration));
        s.y.push_back(rec.probe_reward);
      }
      series.push_back(std::move(s));
    }
    write_file(out / "probe_reward.svg",
               svg_line_plot(to_string(c.experiment) + ": probe reward", series, "iteration", "mean reward"));
    if (!runs.empty() && !runs[0].result.records.empty() && !runs[0].result.records[0].density.empty()) {
      std::vector<std::vector<double>> rows;
      for (const auto& rec : runs[0].result.records) rows.push_back(rec.density);
      const auto [lo, hi] = bounds(runs[0].env);
      write_file(out / "density_run000.svg", svg_heatmap("policy density, run 0", rows, lo, hi));
    }
  }
  write_file(out / "manifest.json", manifest_json(c, started, utc_now(), manifest).dump(2) + "\n");

  std::printf("%s: %zu runs, converged %zu (%.2f, 95%% CI [%.2f, %.2f]), collapsed %zu, diverged %zu\n",
              to_string(c.experiment).c_str(), summary.runs, summary.converged, summary.convergence_fraction,
              summary.convergence_ci.low, summary.convergence_ci.high, summary.collapsed, summary.diverged);
  std::printf("final probe reward %.4f +- %.4f\n", summary.mean_final_reward, summary.std_final_reward);
  return kExitOk;
}

int cmd_sweep(const ExperimentConfig& c) {
  if (!is_discrete_experiment(c.experiment)) throw InvalidParameter("sweep needs a discrete experiment");
  const std::string started = utc_now();
  const auto rows = run_sweep(c);
  const fs::path out = c.out_dir;
  write_file(out / "sweep.csv", render([&](std::ostream& s) { write_sweep_csv(s, c, rows); }));
  if (c.svg) {
    std::map<std::string, Series> by_surrogate;
    for (const auto& r : rows) {
      auto& s = by_surrogate[r.surrogate];
      s.label = r.surrogate;
      s.x.push_back(static_cast<double>(r.n));
      s.y.push_back(r.fraction);
    }
    std::vector<Series> series;
    for (auto& [_, s] : by_surrogate) series.push_back(std::move(s));
    write_file(out / "sweep.svg", svg_line_plot("convergence fraction", series, "actions", "fraction"));
  }
  write_file(out / "manifest.json", manifest_json(c, started, utc_now(), {}).dump(2) + "\n");
  std::printf("%6s %-10s %9s %8s %17s\n", "n", "surrogate", "converged", "fraction", "95% CI");
  for (const auto& r : rows) {
    std::printf("%6zu %-10s %5zu/%-3zu %8.2f   [%.2f, %.2f]\n", r.n, r.surrogate.c_str(), r.converged, r.total,
                r.fraction, r.ci_low, r.ci_high);
  }
  return kExitOk;
}

// Reverse-KL gradient with the sign of the beta r log r weight flipped; used to
// confirm that the gradient check notices a wrong derivation.
std::vector<double> sign_error_gradient(const SurrogateSpec& spec, const PolicyParams& params,
                                        const SampleBatch& batch) {
  const auto* rkl = std::get_if<ReverseKlObjective>(&spec);
  if (!rkl || rkl->penalty != KlPenalty::kSampled) return objective_gradient(spec, params, batch);
  auto g = objective_gradient(UnregularizedObjective{}, params, batch);
  const auto correct = objective_gradient(spec, params, batch);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = 2.0 * g[i] - correct[i];
  return g;
}

int cmd_gradcheck(const ExperimentConfig& c, bool inject, bool write_report) {
  const auto report = inject ? run_gradcheck(c.seed, 100, 1e-4, sign_error_gradient) : run_gradcheck(c.seed);
  std::printf("%-10s %-9s %7s %8s %14s  %s\n", "surrogate", "policy", "checked", "excluded", "max rel error",
              "verdict");
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& cell : report.cells) {
    std::printf("%-10s %-9s %7zu %8zu %14.3e  %s\n", cell.surrogate.c_str(), cell.policy.c_str(), cell.checked,
                cell.excluded, cell.max_relative_error, cell.passed ? "pass" : "FAIL");
    cells.push_back({{"surrogate", cell.surrogate},
                     {"policy", cell.policy},
                     {"checked", cell.checked},
                     {"excluded", cell.excluded},
                     {"max_relative_error", cell.max_relative_error},
                     {"passed", cell.passed}});
  }
  std::printf("mask-boundary exclusions: %zu\n", report.excluded);
  if (write_report) {
    write_file(fs::path(c.out_dir) / "gradcheck.json",
               nlohmann::json{{"schema_version", kManifestSchemaVersion},
                              {"version", kArtifactVersion},
                              {"seed", c.seed},
                              {"passed", report.passed},
                              {"excluded", report.excluded},
                              {"cells", cells}}
                       .dump(2) +
                   "\n");
  }
  if (!report.passed) throw AssertionFailure("gradient check failed");
  return kExitOk;
}

int cmd_regret(const ExperimentConfig& c) {
  if (!is_discrete_experiment(c.experiment)) throw InvalidParameter("regret needs a discrete experiment");
  const fs::path out = c.out_dir;
  bool all_hold = true;
  double worst_alpha = 0.0;
  double alpha_sum = 0.0;
  TrainConfig ppo = c.train;
  if (!std::holds_alternative<ReverseKlObjective>(ppo.surrogate)) ppo.surrogate = ReverseKlObjective{3.0, KlPenalty::kExact};

  for (std::size_t i = 0; i < c.runs; ++i) {
    const std::uint64_t seed = derive_seed(c.seed, i);
    const auto env = std::get<DiscreteSparseBandit>(make_environment(c, seed));
    const auto [lo_it, hi_it] = std::minmax_element(env.means.begin(), env.means.end());
    const double rho_cap = *hi_it - *lo_it;
    if (rho_cap > 0.0 && !(c.eta < 1.0 / rho_cap)) {
      throw InvalidParameter("precondition eta < 1/rho violated: rho can reach " + format_number(rho_cap) +
                             " on this environment, so eta must be below " + format_number(1.0 / rho_cap) +
                             " (got " + format_number(c.eta) + ")");
    }
    const auto ledger = run_exact_mw(env, c.regret_iterations, c.eta);
    char name[48];
    std::snprintf(name, sizeof name, "ledger_exact_%03zu.csv", i);
    write_file(out / name, render([&](std::ostream& s) { write_ledger_csv(s, c, ledger); }));
    for (std::size_t k = 1; k <= ledger.iterations(); ++k) {
      const auto check = regret_check(ledger, k);
      if (!check.holds || !check.simplified_holds) {
        all_hold = false;
        std::fprintf(stderr, "run %zu: bound violated at k = %zu (lhs %.6g, rhs %.6g)\n", i, k, check.lhs,
                     check.rhs_general);
      }
    }

    TrainConfig t = ppo;
    t.seed = seed;
    const auto approx = ppo_rkl_ledger(env, t);
    std::snprintf(name, sizeof name, "ledger_ppo_rkl_%03zu.csv", i);
    write_file(out / name, render([&](std::ostream& s) { write_ledger_csv(s, c, approx); }));
    worst_alpha = std::max(worst_alpha, approx.alpha());
    alpha_sum += approx.alpha();
  }
  std::printf("exact MW: n = %zu, K = %zu, eta = %g, %zu runs: bound %s at every prefix\n", c.num_actions,
              c.regret_iterations, c.eta, c.runs, all_hold ? "holds" : "VIOLATED");
  std::printf("PPO-RKL (%s, %zu iterations): residual alpha max %.4g, mean %.4g (report only)\n",
              surrogate_to_string(ppo.surrogate).c_str(), ppo.iterations, worst_alpha,
              alpha_sum / static_cast<double>(c.runs));
  if (!all_hold) throw AssertionFailure("regret bound violated in exact mode");
  return kExitOk;
}

int cmd_diagnose(const ExperimentConfig& c) {
  if (is_discrete_experiment(c.experiment) || c.policy == PolicyKind::kSoftmax) {
    throw InvalidParameter("diagnose needs a continuous bandit and a gaussian or beta policy");
  }
  const auto result = diagnose_iteration(c);
  const fs::path out = c.out_dir;
  write_file(out / "diagnose.csv", render([&](std::ostream& s) { write_diagnose_csv(s, c, result.rows); }));
  if (c.svg) {
    auto rows = result.rows;
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.action < b.action; });
    Series w{"weighting", {}, {}}, g{"grad contribution", {}, {}};
    for (const auto& r : rows) {
      w.x.push_back(r.action);
      w.y.push_back(r.weighting);
      g.x.push_back(r.action);
      g.y.push_back(r.grad_contrib);
    }
    const Series both[] = {w, g};
    write_file(out / "diagnose.svg", svg_line_plot("per-sample weighting", both, "action", "value"));
  }
  double max_score = 0.0, max_w = 0.0, min_w = INFINITY;
  for (const auto& r : result.rows) {
    max_score = std::max(max_score, r.score_norm);
    max_w = std::max(max_w, r.weighting);
    min_w = std::min(min_w, r.weighting);
  }
  std::printf("%zu samples: max |score| %.4g, weighting range [%.4g, %.4g]\n", result.rows.size(), max_score, min_w,
              max_w);
  return kExitOk;
}

int cmd_landscape(const ExperimentConfig& c, std::size_t points) {
  const Environment env = make_environment(c, derive_seed(c.seed, 0));
  const auto [lo, hi] = bounds(env);
  std::vector<double> grid;
  if (is_discrete(env)) {
    for (std::size_t i = 0; i < std::get<DiscreteSparseBandit>(env).size(); ++i) grid.push_back(static_cast<double>(i));
  } else {
    grid = linear_grid(lo, hi, points);
  }
  const auto probe = landscape_probe(env, grid);
  const fs::path out = c.out_dir;
  write_file(out / "landscape.csv", render([&](std::ostream& s) { write_landscape_csv(s, c, probe); }));
  if (c.svg) {
    Series s{"mean reward", {}, {}};
    for (const auto& p : probe) {
      s.x.push_back(p.action);
      s.y.push_back(p.mean_reward);
    }
    const Series one[] = {s};
    write_file(out / "landscape.svg", svg_line_plot("reward landscape", one, "action", "mean reward"));
  }
  std::printf("%zu points over [%g, %g], optimal action %g\n", probe.size(), lo, hi, optimal_action(env));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ppolab: PPO surrogate and policy-parameterization laboratory"};
  app.require_subcommand(1);
  Flags f;
  auto* run = app.add_subcommand("run", "seeded runs of one experiment");
  auto* sweep = app.add_subcommand("sweep", "convergence fractions over action counts and surrogates");
  auto* gradcheck = app.add_subcommand("gradcheck", "analytic vs finite-difference surrogate gradients");
  auto* regret = app.add_subcommand("regret", "regret ledgers for exact MW and PPO with reverse KL");
  auto* diagnose = app.add_subcommand("diagnose", "one PPO iteration with a per-sample dump");
  auto* landscape = app.add_subcommand("landscape", "mean reward over the action space");
  for (auto* cmd : {run, sweep, gradcheck, regret, diagnose, landscape}) add_common(cmd, f);
  gradcheck->add_flag("--inject-sign-error", f.inject_sign_error, "flip the reverse-KL penalty sign (self-test)");
  regret->add_option("--eta", f.eta, "MW step size");
  landscape->add_option("--points", f.points, "grid points for continuous environments");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(resolve(f, ExperimentId::kFailure1));
    if (*sweep) return cmd_sweep(resolve(f, ExperimentId::kActionSweep));
    if (*gradcheck) return cmd_gradcheck(resolve(f, ExperimentId::kFailure1), f.inject_sign_error, f.out.has_value());
    if (*regret) return cmd_regret(resolve(f, ExperimentId::kFailure3));
    if (*diagnose) return cmd_diagnose(resolve(f, ExperimentId::kFailure1Wide));
    if (*landscape) return cmd_landscape(resolve(f, ExperimentId::kFailure1), f.points);
  } catch (const AssertionFailure& e) {
    std::fprintf(stderr, "assertion failed: %s\n", e.what());
    return kExitAssertion;
  } catch (const InvalidParameter& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitConfig;
}
