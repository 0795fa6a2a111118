#pragma once

#include "dpsurv/step_function.hpp"

#include <Eigen/Dense>

#include <vector>

namespace dpsurv {

/// Product-limit estimator of P(T > t) from durations and event flags.
StepFunction kaplan_meier(const Eigen::VectorXd& durations, const Eigen::VectorXi& flags);

/// Kaplan-Meier estimate of the censoring survival function G(t).
StepFunction censoring_km(const Eigen::VectorXd& durations, const Eigen::VectorXi& events);

/// `points` equally spaced times spanning [min, max] of the durations.
std::vector<double> time_grid(const Eigen::VectorXd& durations, int points = 100);

/// time_grid over the test durations that fall before the censoring estimate
/// reaches zero, so no IPCW weight on the grid divides by an empty tail.
std::vector<double> evaluation_grid(const Eigen::VectorXd& durations, const StepFunction& censoring,
                                    int points = 100);

/// IPCW Brier score at time t. Event-branch weights use the left limit G(T_i-);
/// G is floored at 1e-7.
double brier_score(double t, const SurvivalCurves& curves, const Eigen::VectorXd& durations,
                   const Eigen::VectorXi& events, const StepFunction& censoring);

/// IPCW binomial log-likelihood at time t, survival clamped to [1e-7, 1 - 1e-7].
double binomial_log_likelihood(double t, const SurvivalCurves& curves, const Eigen::VectorXd& durations,
                               const Eigen::VectorXi& events, const StepFunction& censoring);

/// Trapezoidal integral of brier_score over the grid divided by its span.
double integrated_brier(const SurvivalCurves& curves, const Eigen::VectorXd& durations,
                        const Eigen::VectorXi& events, const StepFunction& censoring,
                        const std::vector<double>& grid);

/// Negated integrated binomial log-likelihood (lower is better).
double negative_ibll(const SurvivalCurves& curves, const Eigen::VectorXd& durations, const Eigen::VectorXi& events,
                     const StepFunction& censoring, const std::vector<double>& grid);

/// Time-dependent concordance over pairs with T_i < T_j and E_i = 1, comparing
/// the incidence of i and j at T_i. Ties in the incidence count one half.
double concordance_td(const SurvivalCurves& curves, const Eigen::VectorXd& durations, const Eigen::VectorXi& events);

struct MetricTriple {
  double concordance = 0.0;
  double ibs = 0.0;
  double nibll = 0.0;

  bool operator==(const MetricTriple&) const = default;
};

MetricTriple evaluate_metrics(const SurvivalCurves& curves, const Eigen::VectorXd& durations,
                              const Eigen::VectorXi& events, const StepFunction& censoring,
                              const std::vector<double>& grid);

}  // namespace dpsurv
