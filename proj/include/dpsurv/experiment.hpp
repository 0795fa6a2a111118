#pragma once

#include "dpsurv/data.hpp"
#include "dpsurv/federation.hpp"
#include "dpsurv/metrics.hpp"
#include "dpsurv/survival_model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dpsurv {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  std::string data_source = "synthetic";  // "synthetic" or a CSV path
  std::string duration_column = "duration";
  std::string event_column = "event";
  SynthSpec synth;
  double test_fraction = 0.2;

  std::vector<ModelKind> models = {ModelKind::coxph};
  std::vector<Scheme> schemes = {Scheme::centralized, Scheme::stdfed, Scheme::dpfed, Scheme::dpfed_post};
  FedConfig fed;
  ModelOptions model_options;

  std::vector<double> sigmas = {2.0, 3.0};
  double delta = 1e-3;
  std::optional<double> sensitivity;  // unset: median warm-up update norm
  double post_clip_factor = 2.0;      // P = factor * S
  int accountant_max_order = 128;

  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  int grid_points = 100;
  std::string out_dir = "results";
  int workers = 1;  // experiment cells run in parallel
  bool write_traces = true;

  void validate() const;
};

/// Applies one dotted `key=value` setting.
void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value);
/// Flat key-value text: one `key = value` per line, `#` comments.
ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path);
/// Every setting in the text format parse_config reads.
std::string dump_config(const ExperimentConfig& config);

struct CellKey {
  Scheme scheme = Scheme::centralized;
  ModelKind model = ModelKind::coxph;
  std::optional<double> sigma;

  bool operator==(const CellKey&) const = default;
};

/// Mean and spread of the three metrics for one (scheme, model, sigma).
struct CellResult {
  CellKey key;
  int seed_count = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricTriple> per_seed;
  std::vector<double> sensitivities;  // S used per seed (private schemes)
  MetricTriple mean;
  MetricTriple stddev;
  std::optional<double> epsilon;
  std::optional<int> epsilon_order;
  std::vector<std::string> errors;
};

struct ExperimentReport {
  std::vector<CellResult> cells;

  const CellResult* find(Scheme scheme, ModelKind model, std::optional<double> sigma = std::nullopt) const;
  bool complete() const;
};

struct CellTrace {
  CellKey key;
  std::uint64_t seed = 0;
  std::vector<RoundRecord> rounds;
};

struct ExperimentRun {
  ExperimentReport report;
  std::vector<CellTrace> traces;
};

/// The dataset named by the config (loaded or generated), validated.
SurvivalDataset load_experiment_data(const ExperimentConfig& config);

/// Every seed x scheme x model (x sigma for private schemes) cell. Failures are
/// recorded per cell with their seed and do not stop other cells.
ExperimentRun run_experiment(const ExperimentConfig& config);

/// Fills mean and sample standard deviation from per_seed.
void summarize(CellResult& cell);

enum class Metric { concordance, ibs, nibll };
std::string_view metric_name(Metric m);
double metric_value(const MetricTriple& t, Metric m);
inline bool lower_is_better(Metric m) { return m != Metric::concordance; }

/// +-(B - A) / A, signed so that a positive value is an improvement.
std::optional<double> relative_improvement(Metric m, double a, double b);

struct DeltaEntry {
  ModelKind model = ModelKind::coxph;
  std::optional<double> sigma;
  MetricTriple delta;
  double average = 0.0;
};

struct DeltaSummary {
  std::vector<DeltaEntry> entries;
  double average = 0.0;
  std::vector<std::string> notes;
};

/// Improvement of scheme `to` over scheme `from`, per model and metric, and the
/// average over all of them. Private-vs-private pairs match on sigma; `sigma`
/// restricts the private side when given.
DeltaSummary compute_delta(const ExperimentReport& report, Scheme from, Scheme to,
                           std::optional<double> sigma = std::nullopt);

/// std / mean of one metric in one cell.
double rstd(const CellResult& cell, Metric m);
/// Average rstd over every metric and model of a scheme (and sigma).
double average_rstd(const ExperimentReport& report, Scheme scheme, std::optional<double> sigma = std::nullopt);

enum class ReportFormat { table, csv, records };

std::string format_table(const ExperimentReport& report);
std::string format_csv(const ExperimentReport& report);
std::string format_records(const ExperimentReport& report);
std::string format_trace(const std::vector<RoundRecord>& rounds);
ExperimentReport parse_report_csv(std::string_view text);

/// Writes report.txt, report.csv or report.jsonl into `dir`; returns the path.
std::filesystem::path emit_report(const ExperimentReport& report, ReportFormat format,
                                  const std::filesystem::path& dir);
std::filesystem::path trace_filename(const CellTrace& trace);

}  // namespace dpsurv
