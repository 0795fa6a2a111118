#pragma once

#include "dpsurv/survival_model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dpsurv {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Covariates with right-censored (duration, event) labels.
struct SurvivalDataset {
  Eigen::MatrixXd features;
  Eigen::VectorXd durations;
  Eigen::VectorXi events;
  std::vector<std::string> feature_names;

  Eigen::Index size() const { return durations.size(); }
  Eigen::Index feature_count() const { return features.cols(); }
  Eigen::Index event_count() const { return events.sum(); }

  SurvivalDataset subset(const std::vector<Eigen::Index>& rows) const;
  /// Checks shapes, positive durations and binary events.
  void validate() const;
};

/// Rows of several datasets stacked in order.
SurvivalDataset concatenate(const std::vector<SurvivalDataset>& parts);

/// Reads a CSV with a header row. Every column other than the two label
/// columns becomes a real-valued feature.
SurvivalDataset load_csv(const std::filesystem::path& path, const std::string& duration_column = "duration",
                         const std::string& event_column = "event");
SurvivalDataset parse_csv(const std::string& text, const std::string& duration_column = "duration",
                          const std::string& event_column = "event");

/// Features first, then `duration` and `event`; shortest round-trip decimals.
std::string to_csv(const SurvivalDataset& data);
void write_csv(const SurvivalDataset& data, const std::filesystem::path& path);

/// Per-feature (x - mean) / std with the population std of the fitting split.
/// Constant features map to zero.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& train);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  SurvivalDataset apply(SurvivalDataset data) const;
};

struct FederatedSplit {
  std::vector<Eigen::Index> test;
  std::vector<std::vector<Eigen::Index>> shards;
};

/// Random test/train split, training rows cut into `clients` shards whose sizes
/// differ by at most one. Permutations are redrawn (up to 100 times) until every
/// shard holds at least `min_shard_events` events.
FederatedSplit split_and_partition(const SurvivalDataset& data, double test_fraction, int clients,
                                   std::uint64_t seed, int min_shard_events = 2);

struct SynthSpec {
  Eigen::Index samples = 2000;
  Eigen::Index features = 7;
  Eigen::VectorXd beta = (Eigen::VectorXd(7) << 0.9, -0.7, 0.6, -0.5, 0.4, 0.3, 0.0).finished();
  double weibull_shape = 2.0;
  double weibull_scale = 40.0;
  /// Exponential censoring rate; this default censors about 40% of subjects.
  double censoring_rate = 0.0142;
  std::uint64_t seed = 20210601;

  void validate() const;
};

/// Weibull proportional-hazards event times with exponential censoring:
/// h(t|x) = h0(t) exp(beta'x), T = min(T*, C), E = 1(T* <= C).
SurvivalDataset generate_synthetic(const SynthSpec& spec);

/// Censoring rate giving the requested censored fraction in expectation,
/// found by bisection on a fixed Monte-Carlo sample.
double censoring_rate_for_fraction(SynthSpec spec, double target_fraction, Eigen::Index mc_samples = 200000);

/// Bins of width `width` from 0 covering the largest duration, plus each
/// duration's bin index.
std::pair<TimeBins, Eigen::VectorXi> discretize(const Eigen::VectorXd& durations, double width);

}  // namespace dpsurv
