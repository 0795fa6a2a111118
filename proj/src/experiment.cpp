#include "dpsurv/experiment.hpp"

#include "dpsurv/accountant.hpp"
#include "dpsurv/parallel.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace dpsurv {
namespace {

// Everything a (seed, model) pair shares across schemes.
struct SeedContext {
  std::uint64_t seed = 0;
  ModelKind kind = ModelKind::coxph;
  SurvivalDataset train;
  SurvivalDataset test;
  std::vector<SurvivalDataset> shards;
  std::optional<SurvivalModel> model;
  ParameterVector initial;
  double sensitivity = 0.0;
  std::string error;
};

struct Task {
  std::size_t context = 0;
  std::size_t cell = 0;
};

struct TaskOutcome {
  std::optional<MetricTriple> metrics;
  double sensitivity = 0.0;
  std::vector<RoundRecord> trace;
  std::string error;
};

std::string describe(std::uint64_t seed, Scheme scheme, ModelKind model) {
  return "seed " + std::to_string(seed) + " " + std::string(scheme_name(scheme)) + " " + std::string(model_name(model));
}

Evaluator make_evaluator(const SurvivalModel& model, const SurvivalDataset& train, const SurvivalDataset& test,
                         int grid_points) {
  auto censoring = censoring_km(train.durations, train.events);
  auto grid = evaluation_grid(test.durations, censoring, grid_points);
  return [&model, &train, &test, censoring = std::move(censoring), grid = std::move(grid)](const ParameterVector& p) {
    const auto fitted = fit_predictor(model, p, train.features, train.durations, train.events);
    const auto curves = predict_survival(model, p, fitted, test.features);
    return evaluate_metrics(curves, test.durations, test.events, censoring, grid);
  };
}

SeedContext prepare(const ExperimentConfig& config, const SurvivalDataset& data, std::uint64_t seed, ModelKind kind,
                    bool needs_sensitivity) {
  SeedContext ctx;
  ctx.seed = seed;
  ctx.kind = kind;
  try {
    const auto split = split_and_partition(data, config.test_fraction, config.fed.clients, seed);
    std::vector<SurvivalDataset> raw_shards;
    for (const auto& rows : split.shards) raw_shards.push_back(data.subset(rows));
    const auto raw_train = concatenate(raw_shards);
    const auto scaler = Standardizer::fit(raw_train.features);
    ctx.train = scaler.apply(raw_train);
    ctx.test = scaler.apply(data.subset(split.test));
    for (auto& s : raw_shards) ctx.shards.push_back(scaler.apply(std::move(s)));

    ctx.model = SurvivalModel::make(kind, data.feature_count(), ctx.train.durations, config.model_options);
    auto init_rng = make_stream(seed, {stream_tag("init"), static_cast<std::uint64_t>(kind)});
    ctx.initial = glorot_uniform(ctx.model->network, init_rng);

    if (needs_sensitivity) {
      if (config.sensitivity) {
        ctx.sensitivity = *config.sensitivity;
      } else {
        FedConfig fed = config.fed;
        fed.seed = seed;
        ctx.sensitivity = calibrate_sensitivity(warmup_update_norms(fed, *ctx.model, ctx.shards, ctx.initial));
      }
    }
  } catch (const std::exception& e) {
    ctx.error = "seed " + std::to_string(seed) + " " + std::string(model_name(kind)) + ": " + e.what();
  }
  return ctx;
}

TaskOutcome run_cell(const ExperimentConfig& config, const SeedContext& ctx, const CellKey& key) {
  TaskOutcome out;
  if (!ctx.error.empty()) {
    out.error = ctx.error;
    return out;
  }
  try {
    FedConfig fed = config.fed;
    fed.seed = ctx.seed;
    const auto evaluate = make_evaluator(*ctx.model, ctx.train, ctx.test, config.grid_points);
    TrainingResult result;
    if (key.scheme == Scheme::centralized) {
      result = run_centralized(fed, *ctx.model, ctx.train, ctx.initial, evaluate);
    } else if (key.scheme == Scheme::stdfed) {
      result = run_federated(key.scheme, fed, std::nullopt, *ctx.model, ctx.shards, ctx.initial, evaluate);
    } else {
      PrivacyParams privacy;
      privacy.sensitivity = ctx.sensitivity;
      privacy.noise_multiplier = *key.sigma;
      privacy.post_clip = config.post_clip_factor * ctx.sensitivity;
      privacy.delta = config.delta;
      out.sensitivity = ctx.sensitivity;
      result = run_federated(key.scheme, fed, privacy, *ctx.model, ctx.shards, ctx.initial, evaluate);
    }
    if (!result.trace.empty() && result.trace.back().metrics)
      out.metrics = *result.trace.back().metrics;
    else
      out.metrics = evaluate(result.params);
    if (!std::isfinite(out.metrics->concordance) || !std::isfinite(out.metrics->ibs) ||
        !std::isfinite(out.metrics->nibll))
      throw std::runtime_error("non-finite test metrics");
    out.trace = std::move(result.trace);
  } catch (const std::exception& e) {
    out.metrics.reset();
    out.error = describe(ctx.seed, key.scheme, key.model) + ": " + e.what();
  }
  return out;
}

}  // namespace

const CellResult* ExperimentReport::find(Scheme scheme, ModelKind model, std::optional<double> sigma) const {
  for (const auto& c : cells)
    if (c.key.scheme == scheme && c.key.model == model && (!sigma || c.key.sigma == sigma)) return &c;
  return nullptr;
}

bool ExperimentReport::complete() const {
  for (const auto& c : cells)
    if (!c.errors.empty()) return false;
  return true;
}

SurvivalDataset load_experiment_data(const ExperimentConfig& config) {
  SurvivalDataset data = config.data_source == "synthetic"
                             ? generate_synthetic(config.synth)
                             : load_csv(config.data_source, config.duration_column, config.event_column);
  data.validate();
  return data;
}

void summarize(CellResult& cell) {
  cell.seed_count = static_cast<int>(cell.per_seed.size());
  cell.mean = {};
  cell.stddev = {};
  if (cell.per_seed.empty()) return;
  const double n = static_cast<double>(cell.per_seed.size());
  for (const auto& m : cell.per_seed) {
    cell.mean.concordance += m.concordance;
    cell.mean.ibs += m.ibs;
    cell.mean.nibll += m.nibll;
  }
  cell.mean.concordance /= n;
  cell.mean.ibs /= n;
  cell.mean.nibll /= n;
  if (cell.per_seed.size() < 2) return;
  for (const auto& m : cell.per_seed) {
    cell.stddev.concordance += (m.concordance - cell.mean.concordance) * (m.concordance - cell.mean.concordance);
    cell.stddev.ibs += (m.ibs - cell.mean.ibs) * (m.ibs - cell.mean.ibs);
    cell.stddev.nibll += (m.nibll - cell.mean.nibll) * (m.nibll - cell.mean.nibll);
  }
  cell.stddev.concordance = std::sqrt(cell.stddev.concordance / (n - 1));
  cell.stddev.ibs = std::sqrt(cell.stddev.ibs / (n - 1));
  cell.stddev.nibll = std::sqrt(cell.stddev.nibll / (n - 1));
}

ExperimentRun run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto data = load_experiment_data(config);

  ExperimentRun run;
  auto& cells = run.report.cells;
  for (auto model : config.models)
    for (auto scheme : config.schemes) {
      if (!is_private(scheme)) {
        cells.push_back({});
        cells.back().key = {scheme, model, std::nullopt};
        continue;
      }
      for (double sigma : config.sigmas) {
        CellResult cell;
        cell.key = {scheme, model, sigma};
        if (sigma > 0.0) {
          const auto eps = compute_epsilon({sigma, config.fed.sampling_probability(), config.fed.rounds, config.delta,
                                            config.accountant_max_order});
          cell.epsilon = eps.epsilon;
          cell.epsilon_order = eps.order;
        } else {
          cell.epsilon = std::numeric_limits<double>::infinity();
        }
        cells.push_back(std::move(cell));
      }
    }

  bool any_private = false;
  for (auto s : config.schemes) any_private = any_private || is_private(s);

  std::vector<SeedContext> contexts(config.seeds.size() * config.models.size());
  parallel_for(contexts.size(), config.workers, [&](std::size_t i) {
    const auto seed = config.seeds[i / config.models.size()];
    const auto kind = config.models[i % config.models.size()];
    contexts[i] = prepare(config, data, seed, kind, any_private);
  });

  std::vector<Task> tasks;
  for (std::size_t c = 0; c < contexts.size(); ++c)
    for (std::size_t k = 0; k < cells.size(); ++k)
      if (cells[k].key.model == contexts[c].kind) tasks.push_back({c, k});

  std::vector<TaskOutcome> outcomes(tasks.size());
  parallel_for(tasks.size(), config.workers, [&](std::size_t i) {
    outcomes[i] = run_cell(config, contexts[tasks[i].context], cells[tasks[i].cell].key);
  });

  // Single-owner reduction in task order, which is seed-major.
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    auto& cell = cells[tasks[i].cell];
    const auto seed = contexts[tasks[i].context].seed;
    auto& outcome = outcomes[i];
    if (!outcome.error.empty()) {
      cell.errors.push_back(outcome.error);
      continue;
    }
    cell.seeds.push_back(seed);
    cell.per_seed.push_back(*outcome.metrics);
    if (is_private(cell.key.scheme)) cell.sensitivities.push_back(outcome.sensitivity);
    if (config.write_traces) run.traces.push_back({cell.key, seed, std::move(outcome.trace)});
  }
  for (auto& cell : cells) summarize(cell);
  return run;
}

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::concordance: return "cindex";
    case Metric::ibs: return "ibs";
    case Metric::nibll: return "nibll";
  }
  return "?";
}

double metric_value(const MetricTriple& t, Metric m) {
  switch (m) {
    case Metric::concordance: return t.concordance;
    case Metric::ibs: return t.ibs;
    case Metric::nibll: return t.nibll;
  }
  return 0.0;
}

std::optional<double> relative_improvement(Metric m, double a, double b) {
  if (a == 0.0 || !std::isfinite(a) || !std::isfinite(b)) return std::nullopt;
  const double raw = (b - a) / a;
  return lower_is_better(m) ? -raw : raw;
}

DeltaSummary compute_delta(const ExperimentReport& report, Scheme from, Scheme to, std::optional<double> sigma) {
  constexpr Metric metrics[] = {Metric::concordance, Metric::ibs, Metric::nibll};
  DeltaSummary summary;
  double total = 0.0;
  int counted = 0;
  for (const auto& b : report.cells) {
    if (b.key.scheme != to || b.per_seed.empty()) continue;
    if (sigma && is_private(to) && b.key.sigma != sigma) continue;
    const CellResult* a = nullptr;
    for (const auto& c : report.cells) {
      if (c.key.scheme != from || c.key.model != b.key.model || c.per_seed.empty()) continue;
      if (is_private(from) && is_private(to) && c.key.sigma != b.key.sigma) continue;
      if (is_private(from) && !is_private(to) && sigma && c.key.sigma != sigma) continue;
      a = &c;
      break;
    }
    if (!a) continue;
    DeltaEntry entry;
    entry.model = b.key.model;
    entry.sigma = b.key.sigma ? b.key.sigma : a->key.sigma;
    double entry_total = 0.0;
    int entry_count = 0;
    for (auto m : metrics) {
      const auto d = relative_improvement(m, metric_value(a->mean, m), metric_value(b.mean, m));
      double* slot = m == Metric::concordance ? &entry.delta.concordance
                     : m == Metric::ibs       ? &entry.delta.ibs
                                              : &entry.delta.nibll;
      if (!d) {
        *slot = std::numeric_limits<double>::quiet_NaN();
        summary.notes.push_back(std::string(model_name(b.key.model)) + " " + std::string(metric_name(m)) +
                                ": baseline mean is zero or non-finite, excluded");
        continue;
      }
      *slot = *d;
      entry_total += *d;
      ++entry_count;
    }
    entry.average = entry_count ? entry_total / entry_count : std::numeric_limits<double>::quiet_NaN();
    total += entry_total;
    counted += entry_count;
    summary.entries.push_back(entry);
  }
  summary.average = counted ? total / counted : std::numeric_limits<double>::quiet_NaN();
  return summary;
}

double rstd(const CellResult& cell, Metric m) {
  const double mean = metric_value(cell.mean, m);
  if (mean == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return metric_value(cell.stddev, m) / std::abs(mean);
}

double average_rstd(const ExperimentReport& report, Scheme scheme, std::optional<double> sigma) {
  double total = 0.0;
  int count = 0;
  for (const auto& c : report.cells) {
    if (c.key.scheme != scheme || c.per_seed.empty()) continue;
    if (sigma && is_private(scheme) && c.key.sigma != sigma) continue;
    for (auto m : {Metric::concordance, Metric::ibs, Metric::nibll}) {
      const double r = rstd(c, m);
      if (std::isfinite(r)) {
        total += r;
        ++count;
      }
    }
  }
  return count ? total / count : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace dpsurv
