#include "dpsurv/metrics.hpp"

#include "dpsurv/survival_losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace dpsurv {
namespace {

void check_survival_inputs(const SurvivalCurves& curves, const Eigen::VectorXd& durations,
                           const Eigen::VectorXi& events) {
  if (curves.sample_count() != durations.size() || events.size() != durations.size())
    throw std::invalid_argument("one survival curve, duration and event flag per sample required");
  if (durations.size() == 0) throw std::invalid_argument("metrics need at least one sample");
}

double floored(double g) { return std::max(g, kProbabilityFloor); }

template <typename PointMetric>
double integrate_over_grid(const std::vector<double>& grid, PointMetric&& metric) {
  if (grid.size() < 2) throw std::invalid_argument("time grid needs at least two points");
  for (std::size_t k = 1; k < grid.size(); ++k)
    if (!(grid[k] > grid[k - 1])) throw std::invalid_argument("time grid must be strictly increasing");
  const double span = grid.back() - grid.front();
  double area = 0.0;
  double prev = metric(grid.front());
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double cur = metric(grid[k]);
    area += 0.5 * (prev + cur) * (grid[k] - grid[k - 1]);
    prev = cur;
  }
  return area / span;
}

}  // namespace

StepFunction kaplan_meier(const Eigen::VectorXd& durations, const Eigen::VectorXi& flags) {
  const Eigen::Index n = durations.size();
  if (n == 0) throw std::invalid_argument("kaplan_meier: empty input");
  if (flags.size() != n) throw std::invalid_argument("kaplan_meier: durations and flags differ in length");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return durations[a] < durations[b]; });
  std::vector<double> times;
  std::vector<double> values;
  double s = 1.0;
  std::size_t at_risk = order.size();
  for (std::size_t b = 0; b < order.size();) {
    std::size_t e = b + 1;
    while (e < order.size() && durations[order[e]] == durations[order[b]]) ++e;
    int d = 0;
    for (std::size_t k = b; k < e; ++k) {
      if (flags[order[k]] != 0 && flags[order[k]] != 1) throw std::invalid_argument("kaplan_meier: flags must be 0 or 1");
      d += flags[order[k]];
    }
    if (d > 0) {
      s *= static_cast<double>(at_risk - static_cast<std::size_t>(d)) / static_cast<double>(at_risk);
      times.push_back(durations[order[b]]);
      values.push_back(s);
    }
    at_risk -= e - b;
    b = e;
  }
  return StepFunction(std::move(times), std::move(values), 1.0);
}

StepFunction censoring_km(const Eigen::VectorXd& durations, const Eigen::VectorXi& events) {
  return kaplan_meier(durations, (1 - events.array()).matrix());
}

std::vector<double> time_grid(const Eigen::VectorXd& durations, int points) {
  if (points < 2) throw std::invalid_argument("time grid needs at least two points");
  if (durations.size() == 0) throw std::invalid_argument("time grid needs durations");
  const double lo = durations.minCoeff();
  const double hi = durations.maxCoeff();
  if (!(hi > lo)) throw std::invalid_argument("time grid: degenerate duration span");
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k) grid[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / (points - 1);
  grid.back() = hi;
  return grid;
}

std::vector<double> evaluation_grid(const Eigen::VectorXd& durations, const StepFunction& censoring, int points) {
  const auto& values = censoring.values();
  const auto zero = std::find(values.begin(), values.end(), 0.0);
  if (zero == values.end()) return time_grid(durations, points);
  const double cutoff = censoring.times()[static_cast<std::size_t>(zero - values.begin())];
  std::vector<double> kept;
  for (double d : durations)
    if (d < cutoff) kept.push_back(d);
  return time_grid(Eigen::Map<const Eigen::VectorXd>(kept.data(), static_cast<Eigen::Index>(kept.size())), points);
}

double brier_score(double t, const SurvivalCurves& curves, const Eigen::VectorXd& durations,
                   const Eigen::VectorXi& events, const StepFunction& censoring) {
  check_survival_inputs(curves, durations, events);
  const double g_t = floored(censoring(t));
  double total = 0.0;
  for (Eigen::Index i = 0; i < durations.size(); ++i) {
    const double s = curves.at(i, t);
    if (durations[i] <= t && events[i] == 1)
      total += s * s / floored(censoring.left_limit(durations[i]));
    else if (durations[i] > t)
      total += (1.0 - s) * (1.0 - s) / g_t;
  }
  const double bs = total / static_cast<double>(durations.size());
  if (!std::isfinite(bs) || bs < 0.0) throw std::runtime_error("brier_score: invalid value at t=" + std::to_string(t));
  return bs;
}

double binomial_log_likelihood(double t, const SurvivalCurves& curves, const Eigen::VectorXd& durations,
                               const Eigen::VectorXi& events, const StepFunction& censoring) {
  check_survival_inputs(curves, durations, events);
  const double g_t = floored(censoring(t));
  double total = 0.0;
  for (Eigen::Index i = 0; i < durations.size(); ++i) {
    const double s = std::clamp(curves.at(i, t), kProbabilityFloor, 1.0 - kProbabilityFloor);
    if (durations[i] <= t && events[i] == 1)
      total += std::log(1.0 - s) / floored(censoring.left_limit(durations[i]));
    else if (durations[i] > t)
      total += std::log(s) / g_t;
  }
  return total / static_cast<double>(durations.size());
}

double integrated_brier(const SurvivalCurves& curves, const Eigen::VectorXd& durations,
                        const Eigen::VectorXi& events, const StepFunction& censoring,
                        const std::vector<double>& grid) {
  return integrate_over_grid(grid, [&](double t) { return brier_score(t, curves, durations, events, censoring); });
}

double negative_ibll(const SurvivalCurves& curves, const Eigen::VectorXd& durations, const Eigen::VectorXi& events,
                     const StepFunction& censoring, const std::vector<double>& grid) {
  return -integrate_over_grid(
      grid, [&](double t) { return binomial_log_likelihood(t, curves, durations, events, censoring); });
}

double concordance_td(const SurvivalCurves& curves, const Eigen::VectorXd& durations, const Eigen::VectorXi& events) {
  check_survival_inputs(curves, durations, events);
  const Eigen::Index n = durations.size();
  double concordant = 0.0;
  double comparable = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (events[i] != 1) continue;
    const double ti = durations[i];
    const auto it = std::upper_bound(curves.times.begin(), curves.times.end(), ti);
    const Eigen::Index row = static_cast<Eigen::Index>(it - curves.times.begin()) - 1;
    auto survival_at = [&](Eigen::Index j) { return row < 0 ? 1.0 : curves.survival(row, j); };
    const double fi = 1.0 - survival_at(i);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!(ti < durations[j])) continue;
      const double fj = 1.0 - survival_at(j);
      comparable += 1.0;
      if (fi > fj)
        concordant += 1.0;
      else if (fi == fj)
        concordant += 0.5;
    }
  }
  if (comparable == 0.0) throw std::invalid_argument("concordance_td: no comparable pairs, concordance undefined");
  return concordant / comparable;
}

MetricTriple evaluate_metrics(const SurvivalCurves& curves, const Eigen::VectorXd& durations,
                              const Eigen::VectorXi& events, const StepFunction& censoring,
                              const std::vector<double>& grid) {
  return {concordance_td(curves, durations, events), integrated_brier(curves, durations, events, censoring, grid),
          negative_ibll(curves, durations, events, censoring, grid)};
}

}  // namespace dpsurv
