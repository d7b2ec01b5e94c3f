#include "ppolab/report.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ppolab {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

nlohmann::json verdict_json(const RunVerdict& v) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  return {{"converged", v.converged},         {"collapsed", v.collapsed},
          {"diverged", v.diverged},           {"final_reward", num(v.final_reward)},
          {"tail_reward", num(v.tail_reward)}, {"location", num(v.location)},
          {"optimal_probability", num(v.optimal_probability)}};
}

}  // namespace

std::string csv_header(const ExperimentConfig& config) {
  return std::string("# ppolab ") + kArtifactVersion + " seed=" + std::to_string(config.seed) +
         " config=" + hex(config_hash(config)) + "\n";
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

void write_iterations_csv(std::ostream& out, const ExperimentConfig& config,
                          std::span<const IterationRecord> records) {
  out << csv_header(config);
  out << "iter,mean_reward,probe_reward,kl_fwd,kl_rev,ratio_min,ratio_max,clip_inactive_frac\n";
  for (const auto& r : records) {
    out << r.iteration << ',' << format_number(r.reward_mean) << ',' << format_number(r.probe_reward) << ','
        << format_number(r.kl_forward) << ',' << format_number(r.kl_reverse) << ',' << format_number(r.ratio_min)
        << ',' << format_number(r.ratio_max) << ',' << format_number(r.clip_inactive_fraction) << '\n';
  }
}

void write_sweep_csv(std::ostream& out, const ExperimentConfig& config, std::span<const SweepRow> rows) {
  out << csv_header(config);
  out << "n,surrogate,policy,converged,total,fraction,ci_low,ci_high\n";
  for (const auto& r : rows) {
    out << r.n << ',' << r.surrogate << ',' << r.policy << ',' << r.converged << ',' << r.total << ','
        << format_number(r.fraction) << ',' << format_number(r.ci_low) << ',' << format_number(r.ci_high) << '\n';
  }
}

void write_ledger_csv(std::ostream& out, const ExperimentConfig& config, const RegretLedger& ledger) {
  out << csv_header(config);
  out << "k,eta,lhs,rhs,holds\n";
  for (std::size_t k = 1; k <= ledger.iterations(); ++k) {
    const auto check = regret_check(ledger, k);
    out << k << ',' << format_number(ledger.terms[k - 1].eta) << ',' << format_number(check.lhs) << ','
        << format_number(check.rhs_general) << ',' << (check.holds ? 1 : 0) << '\n';
  }
}

void write_diagnose_csv(std::ostream& out, const ExperimentConfig& config, std::span<const DiagnoseRow> rows) {
  out << csv_header(config);
  out << "action,reward,ratio,score_norm,weighting,grad_contrib\n";
  for (const auto& r : rows) {
    out << format_number(r.action) << ',' << format_number(r.reward) << ',' << format_number(r.ratio) << ','
        << format_number(r.score_norm) << ',' << format_number(r.weighting) << ',' << format_number(r.grad_contrib)
        << '\n';
  }
}

void write_landscape_csv(std::ostream& out, const ExperimentConfig& config, std::span<const LandscapePoint> points) {
  out << csv_header(config);
  out << "action,mean_reward\n";
  for (const auto& p : points) out << format_number(p.action) << ',' << format_number(p.mean_reward) << '\n';
}

nlohmann::json summary_json(const ExperimentConfig& config, const ExperimentSummary& s) {
  return {{"schema_version", kManifestSchemaVersion},
          {"version", kArtifactVersion},
          {"experiment", to_string(config.experiment)},
          {"config_hash", hex(config_hash(config))},
          {"seed", config.seed},
          {"runs", s.runs},
          {"converged", s.converged},
          {"collapsed", s.collapsed},
          {"diverged", s.diverged},
          {"mean_final_reward", s.mean_final_reward},
          {"std_final_reward", s.std_final_reward},
          {"convergence_fraction", s.convergence_fraction},
          {"convergence_ci", {s.convergence_ci.low, s.convergence_ci.high}},
          {"collapse_fraction", s.collapse_fraction}};
}

nlohmann::json manifest_json(const ExperimentConfig& config, const std::string& started, const std::string& finished,
                             std::span<const ManifestRun> runs) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& r : runs) {
    list.push_back({{"index", r.index}, {"seed", r.seed}, {"csv", r.csv_path}, {"verdict", verdict_json(r.verdict)}});
  }
  return {{"schema_version", kManifestSchemaVersion},
          {"version", kArtifactVersion},
          {"config", to_json(config)},
          {"config_hash", hex(config_hash(config))},
          {"seed", config.seed},
          {"started", started},
          {"finished", finished},
          {"runs", list}};
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw std::runtime_error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << content;
  f.close();
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

std::string svg_line_plot(const std::string& title, std::span<const Series> series, const std::string& x_label,
                          const std::string& y_label) {
  constexpr double W = 640, H = 400, L = 60, R = 20, T = 40, B = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!(x0 < x1)) { x0 = std::isfinite(x0) ? x0 - 1 : 0; x1 = x0 + 2; }
  if (!(y0 < y1)) { y0 = std::isfinite(y0) ? y0 - 1 : 0; y1 = y0 + 2; }
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape_xml(title) << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0;
    const double yv = y0 + (y1 - y0) * i / 4.0;
    o << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 15 << "\" text-anchor=\"middle\">" << format_number(std::round(xv * 100) / 100) << "</text>\n";
    o << "<text x=\"" << L - 5 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << format_number(std::round(yv * 100) / 100) << "</text>\n";
  }
  o << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << escape_xml(x_label) << "</text>\n";
  o << "<text x=\"15\" y=\"" << H / 2 << "\" transform=\"rotate(-90 15 " << H / 2 << ")\" text-anchor=\"middle\">" << escape_xml(y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* colour = kPalette[k % std::size(kPalette)];
    o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) o << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    o << "\"/>\n";
    if (series.size() <= 10 && !s.label.empty()) {
      o << "<text x=\"" << W - R - 5 << "\" y=\"" << T + 12 * (k + 1) << "\" text-anchor=\"end\" fill=\"" << colour << "\">" << escape_xml(s.label) << "</text>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

std::string svg_heatmap(const std::string& title, const std::vector<std::vector<double>>& rows, double lo, double hi) {
  constexpr double W = 640, H = 400, L = 60, R = 20, T = 40, B = 50;
  double peak = 0.0;
  std::size_t cols = 0;
  for (const auto& r : rows) {
    cols = std::max(cols, r.size());
    for (double v : r) {
      if (std::isfinite(v)) peak = std::max(peak, v);
    }
  }
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape_xml(title) << "</text>\n";
  if (!rows.empty() && cols > 0) {
    const double cw = (W - L - R) / static_cast<double>(cols);
    const double ch = (H - T - B) / static_cast<double>(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < rows[i].size(); ++j) {
        const double v = peak > 0 && std::isfinite(rows[i][j]) ? rows[i][j] / peak : 0.0;
        const int shade = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(v, 0.0, 1.0))));
        o << "<rect x=\"" << L + j * cw << "\" y=\"" << T + i * ch << "\" width=\"" << cw + 0.5 << "\" height=\"" << ch + 0.5
          << "\" fill=\"rgb(" << shade << ',' << shade << ",255)\"/>\n";
      }
    }
  }
  o << "<text x=\"" << L << "\" y=\"" << H - B + 15 << "\">" << format_number(lo) << "</text>\n";
  o << "<text x=\"" << W - R << "\" y=\"" << H - B + 15 << "\" text-anchor=\"end\">" << format_number(hi) << "</text>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">action (rows: iterations; colour scaled by the run maximum "
    << format_number(peak) << ")</text>\n";
  o << "</svg>\n";
  return o.str();
}

}  // namespace ppolab
