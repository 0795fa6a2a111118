#include "dpsurv/step_function.hpp"

#include <algorithm>
#include <stdexcept>

namespace dpsurv {

StepFunction::StepFunction(std::vector<double> times, std::vector<double> values, double initial_value)
    : times_(std::move(times)), values_(std::move(values)), initial_(initial_value) {
  if (times_.size() != values_.size()) throw std::invalid_argument("StepFunction: times and values differ in length");
  for (std::size_t i = 1; i < times_.size(); ++i)
    if (!(times_[i] > times_[i - 1])) throw std::invalid_argument("StepFunction: jump times must be strictly increasing");
}

double StepFunction::operator()(double t) const {
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return initial_;
  return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

double StepFunction::left_limit(double t) const {
  auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return initial_;
  return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

double SurvivalCurves::at(Eigen::Index sample, double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return survival(static_cast<Eigen::Index>(it - times.begin()) - 1, sample);
}

StepFunction SurvivalCurves::curve(Eigen::Index sample) const {
  std::vector<double> values(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) values[k] = survival(static_cast<Eigen::Index>(k), sample);
  return StepFunction(times, std::move(values), 1.0);
}

}  // namespace dpsurv
