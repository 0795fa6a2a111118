#pragma once

#include <Eigen/Dense>

#include <vector>

namespace dpsurv {

/// Right-continuous piecewise-constant function of time.
class StepFunction {
 public:
  explicit StepFunction(double initial_value = 1.0) : initial_(initial_value) {}
  StepFunction(std::vector<double> times, std::vector<double> values, double initial_value);

  /// Value of the last jump at or before t.
  double operator()(double t) const;
  /// Value of the last jump strictly before t.
  double left_limit(double t) const;

  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& values() const { return values_; }
  double initial_value() const { return initial_; }

 private:
  std::vector<double> times_;
  std::vector<double> values_;
  double initial_;
};

/// Survival curves for a batch of samples sharing one set of jump times.
/// `survival(k, j)` is the value for sample j from times[k] until times[k+1].
struct SurvivalCurves {
  std::vector<double> times;
  Eigen::MatrixXd survival;

  Eigen::Index sample_count() const { return survival.cols(); }
  double at(Eigen::Index sample, double t) const;
  StepFunction curve(Eigen::Index sample) const;
};

}  // namespace dpsurv
