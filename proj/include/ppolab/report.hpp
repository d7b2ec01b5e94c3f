#pragma once

#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ppolab/envs.hpp"
#include "ppolab/experiments.hpp"
#include "ppolab/mw_theory.hpp"
#include "ppolab/trainer.hpp"

namespace ppolab {

/// "# ppolab <version> seed=<seed> config=<hash>" plus a newline.
std::string csv_header(const ExperimentConfig& config);

/// Shortest round-trip formatting; "nan" / "inf" / "-inf" for non-finite values.
std::string format_number(double value);

void write_iterations_csv(std::ostream& out, const ExperimentConfig& config, std::span<const IterationRecord> records);
void write_sweep_csv(std::ostream& out, const ExperimentConfig& config, std::span<const SweepRow> rows);
/// One row per prefix k = 1..K of the general inequality.
void write_ledger_csv(std::ostream& out, const ExperimentConfig& config, const RegretLedger& ledger);
void write_diagnose_csv(std::ostream& out, const ExperimentConfig& config, std::span<const DiagnoseRow> rows);
void write_landscape_csv(std::ostream& out, const ExperimentConfig& config, std::span<const LandscapePoint> points);

nlohmann::json summary_json(const ExperimentConfig& config, const ExperimentSummary& summary);

struct ManifestRun {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::string csv_path;
  RunVerdict verdict;
};
nlohmann::json manifest_json(const ExperimentConfig& config, const std::string& started, const std::string& finished,
                             std::span<const ManifestRun> runs);

/// UTC timestamp in ISO 8601.
std::string utc_now();

/// Writes `content` to `path`, creating parent directories; throws std::runtime_error on failure.
void write_file(const std::filesystem::path& path, const std::string& content);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};
/// Self-contained SVG line chart.
std::string svg_line_plot(const std::string& title, std::span<const Series> series, const std::string& x_label,
                          const std::string& y_label);
/// Rows are iterations, columns grid cells; colours are scaled by the maximum over the whole run.
std::string svg_heatmap(const std::string& title, const std::vector<std::vector<double>>& rows, double lo, double hi);

}  // namespace ppolab
