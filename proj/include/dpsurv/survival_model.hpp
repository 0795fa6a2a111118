#pragma once

#include "dpsurv/neural.hpp"
#include "dpsurv/rng.hpp"
#include "dpsurv/step_function.hpp"
#include "dpsurv/survival_losses.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace dpsurv {

enum class ModelKind { coxph, coxcc, coxtime, deephit };

std::string_view model_name(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

/// Half-open bins [edges[k], edges[k+1]).
struct TimeBins {
  std::vector<double> edges;

  Eigen::Index bin_count() const { return static_cast<Eigen::Index>(edges.size()) - 1; }
  /// floor(t / width), clamped into the last bin.
  Eigen::Index index_of(double t) const;
  std::vector<double> starts() const { return {edges.begin(), edges.end() - 1}; }
};

/// Standardizes the extra time covariate of CoxTime.
struct TimeScaler {
  double mean = 0.0;
  double scale = 1.0;

  static TimeScaler fit(const Eigen::VectorXd& durations);
  double operator()(double t) const { return (t - mean) / scale; }
};

struct ModelOptions {
  std::vector<Eigen::Index> hidden = {32, 32};
  int controls_per_case = 1;
  double bin_width = 12.0;
  DeepHitWeights deephit;
};

/// A network plus the loss head that turns its output into survival curves.
struct SurvivalModel {
  ModelKind kind = ModelKind::coxph;
  MlpSpec network;
  int controls_per_case = 1;
  TimeScaler time_scaler;
  TimeBins bins;
  DeepHitWeights deephit;

  /// Sizes the network for `features` covariates and fits the time scaling or
  /// binning to the training durations.
  static SurvivalModel make(ModelKind kind, Eigen::Index features, const Eigen::VectorXd& train_durations,
                            const ModelOptions& options = {});
};

struct ParameterGradient {
  double loss = 0.0;
  ParameterVector grad;
};

/// Loss of the whole network-plus-head chain with a fixed control sample
/// (ignored by CoxPH and DeepHit).
ParameterGradient evaluate_loss(const SurvivalModel& model, const ParameterVector& params, const Eigen::MatrixXd& x,
                                const Eigen::VectorXd& durations, const Eigen::VectorXi& events,
                                const std::vector<CaseControls>& pairs, bool with_gradient = true);

/// Samples controls when the head needs them and evaluates the loss. Returns
/// nothing for Cox-family heads on a batch without events.
std::optional<ParameterGradient> batch_loss(const SurvivalModel& model, const ParameterVector& params,
                                            const Eigen::MatrixXd& x, const Eigen::VectorXd& durations,
                                            const Eigen::VectorXi& events, Rng& rng);

/// Whatever a trained model needs from its training data to predict curves.
struct FittedPredictor {
  StepFunction baseline{0.0};              // CoxPH, CoxCC
  std::vector<double> event_times;         // CoxTime
  std::vector<double> hazard_increments;   // CoxTime
};

FittedPredictor fit_predictor(const SurvivalModel& model, const ParameterVector& params, const Eigen::MatrixXd& x,
                              const Eigen::VectorXd& durations, const Eigen::VectorXi& events);

SurvivalCurves predict_survival(const SurvivalModel& model, const ParameterVector& params,
                                const FittedPredictor& fitted, const Eigen::MatrixXd& x);

/// CoxTime network input: standardized time prepended to the covariates.
Eigen::MatrixXd with_time_column(const Eigen::MatrixXd& x, const Eigen::VectorXd& scaled_times);

}  // namespace dpsurv
