#pragma once

#include "dpsurv/data.hpp"
#include "dpsurv/metrics.hpp"
#include "dpsurv/neural.hpp"
#include "dpsurv/rng.hpp"
#include "dpsurv/survival_model.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dpsurv {

enum class Scheme { centralized, stdfed, dpfed, dpfed_post };

std::string_view scheme_name(Scheme scheme);
Scheme parse_scheme(std::string_view name);
inline bool is_private(Scheme s) { return s == Scheme::dpfed || s == Scheme::dpfed_post; }

enum class LocalOptimizer { adam, sgd };

std::string_view optimizer_name(LocalOptimizer opt);
LocalOptimizer parse_optimizer(std::string_view name);

struct FedConfig {
  int clients = 10;   // N
  int selected = 5;   // K
  int local_epochs = 50;
  int batch_size = 64;
  int rounds = 50;
  double learning_rate = 1e-4;
  LocalOptimizer optimizer = LocalOptimizer::adam;
  std::uint64_t seed = 0;
  /// Evaluate the global model every this many rounds (0: final round only).
  int eval_every = 1;
  /// Threads used for the client updates of one round.
  int workers = 1;

  double sampling_probability() const { return static_cast<double>(selected) / clients; }
  void validate() const;
};

struct PrivacyParams {
  double sensitivity = 1.0;       // S, per-client L2 clip
  double noise_multiplier = 2.0;  // sigma
  double post_clip = 2.0;         // P, clip of the noisy mean (dpfed-post)
  double delta = 1e-3;

  void validate(Scheme scheme) const;
};

struct TrainingOptions {
  int epochs = 50;
  int batch_size = 64;
  double learning_rate = 1e-4;
  LocalOptimizer optimizer = LocalOptimizer::adam;
};

/// Epochs of shuffled mini-batch training. Batches without events under a Cox
/// head are skipped. `adam` carries optimizer state across calls.
void train_epochs(const SurvivalModel& model, ParameterVector& params, const SurvivalDataset& data,
                  const TrainingOptions& options, AdamState<double>& adam, Rng& rng);

/// Local training from the global parameters with fresh optimizer state.
ParameterVector client_update(const SurvivalModel& model, const ParameterVector& global, const SurvivalDataset& shard,
                              const TrainingOptions& options, Rng& rng);

/// v / max(1, |v| / bound).
ParameterVector clip_l2(const ParameterVector& v, double bound);

/// (sum of clipped updates + N(0, (S sigma)^2 I)) / K. Every update must
/// already satisfy |u| <= S.
ParameterVector aggregate(const std::vector<ParameterVector>& clipped, double sensitivity, double noise_multiplier,
                          Rng& rng);

/// The extra clip of the noisy mean update to norm P.
ParameterVector post_process(const ParameterVector& noisy_mean, double post_clip);

/// Median of the warm-up update norms (mean of the middle pair for even counts).
double calibrate_sensitivity(std::vector<double> norms);

Rng client_stream(std::uint64_t seed, int round, int client);
Rng noise_stream(std::uint64_t seed, int round);
Rng central_stream(std::uint64_t seed);

/// K distinct clients drawn uniformly for the given round, ascending.
std::vector<int> select_clients(const FedConfig& config, int round);

struct RoundRecord {
  int round = 0;
  std::vector<int> selected;
  std::vector<double> update_norms;
  std::vector<double> clipped_norms;
  double aggregate_norm = 0.0;
  double applied_norm = 0.0;
  std::string noise_tag;
  std::optional<MetricTriple> metrics;
};

struct TrainingResult {
  ParameterVector params;
  std::vector<RoundRecord> trace;
};

using Evaluator = std::function<MetricTriple(const ParameterVector&)>;

TrainingOptions local_options(const FedConfig& config);

/// Update norms of every client after one non-private round from `initial`
/// (round index 0, not charged to the privacy budget).
std::vector<double> warmup_update_norms(const FedConfig& config, const SurvivalModel& model,
                                        const std::vector<SurvivalDataset>& shards, const ParameterVector& initial);

/// StdFed, DPFed or DPFed-post over the client shards.
TrainingResult run_federated(Scheme scheme, const FedConfig& config, const std::optional<PrivacyParams>& privacy,
                             const SurvivalModel& model, const std::vector<SurvivalDataset>& shards,
                             const ParameterVector& initial, const Evaluator& evaluate = {});

/// Pooled training for rounds * local_epochs epochs with one optimizer state.
/// Each trace entry covers local_epochs epochs.
TrainingResult run_centralized(const FedConfig& config, const SurvivalModel& model, const SurvivalDataset& train,
                               const ParameterVector& initial, const Evaluator& evaluate = {});

}  // namespace dpsurv
