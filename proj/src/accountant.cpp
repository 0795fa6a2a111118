#include "dpsurv/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace dpsurv {
namespace {

constexpr double kTailWidth = 12.0;
constexpr double kRelativeTolerance = 1e-10;
constexpr int kMinLevel = 8;
constexpr int kMaxLevel = 24;

double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

// log of int exp(log_f(x)) dx over [lo, hi].
template <typename LogIntegrand>
double log_integral(LogIntegrand&& log_f, double lo, double hi) {
  double shift = -std::numeric_limits<double>::infinity();
  constexpr int kProbe = 1 << kMinLevel;
  for (int k = 0; k <= kProbe; ++k) shift = std::max(shift, log_f(lo + (hi - lo) * k / kProbe));
  if (!std::isfinite(shift)) return shift;
  auto f = [&](double x) { return std::exp(log_f(x) - shift); };

  double h = hi - lo;
  double trapezoid = 0.5 * h * (f(lo) + f(hi));
  double simpson = trapezoid;
  long intervals = 1;
  for (int level = 1; level <= kMaxLevel; ++level) {
    double mid_sum = 0.0;
    for (long k = 0; k < intervals; ++k) mid_sum += f(lo + (static_cast<double>(k) + 0.5) * h);
    const double refined = 0.5 * trapezoid + 0.5 * h * mid_sum;
    const double next = (4.0 * refined - trapezoid) / 3.0;
    h *= 0.5;
    intervals *= 2;
    trapezoid = refined;
    const bool converged = level >= kMinLevel && std::abs(next - simpson) <= kRelativeTolerance * std::abs(next);
    simpson = next;
    if (converged) break;
  }
  return std::log(simpson) + shift;
}

}  // namespace

void AccountantInputs::validate() const {
  if (!(noise_multiplier > 0.0)) throw std::invalid_argument("accountant: noise multiplier must be positive");
  if (!(sampling_probability >= 0.0 && sampling_probability <= 1.0))
    throw std::invalid_argument("accountant: sampling probability must lie in [0, 1]");
  if (rounds < 1) throw std::invalid_argument("accountant: need at least one round");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("accountant: delta must lie in (0, 1)");
  if (max_order < 1) throw std::invalid_argument("accountant: order grid is empty");
}

double log_moment(int order, double sigma, double sampling_probability) {
  if (order < 1) throw std::invalid_argument("log_moment: order must be at least 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("log_moment: sigma must be positive");
  const double c = sampling_probability;
  if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("log_moment: sampling probability must lie in [0, 1]");
  if (c == 0.0) return 0.0;

  const double lambda = order;
  const double two_var = 2.0 * sigma * sigma;
  const double log_norm = -std::log(std::sqrt(2.0 * std::numbers::pi) * sigma);
  const double log_keep = c < 1.0 ? std::log1p(-c) : -std::numeric_limits<double>::infinity();
  const double log_c = std::log(c);
  auto log_eta0 = [&](double x) { return log_norm - x * x / two_var; };
  auto log_eta1 = [&](double x) {
    return log_add_exp(log_keep + log_eta0(x), log_c + log_norm - (x - 1.0) * (x - 1.0) / two_var);
  };

  // The integrands peak near x = -order and x = 1 + order, so the window
  // reaches past those as well as 12 sigma beyond the two means.
  const double lo = -lambda - kTailWidth * sigma;
  const double hi = 1.0 + lambda + kTailWidth * sigma;
  const double log_e1 = log_integral(
      [&](double x) {
        const double a = log_eta0(x), b = log_eta1(x);
        return a + lambda * (a - b);
      },
      lo, hi);
  const double log_e2 = log_integral(
      [&](double x) {
        const double a = log_eta0(x), b = log_eta1(x);
        return b + lambda * (b - a);
      },
      lo, hi);
  const double alpha = std::max(log_e1, log_e2);
  if (!std::isfinite(alpha))
    throw AccountantOverflow(order, "log moment is not finite at order " + std::to_string(order) + " (sigma " +
                                        std::to_string(sigma) + ")");
  // Both integrals are >= 1 by Jensen; clamp quadrature round-off below zero.
  return std::max(alpha, 0.0);
}

EpsilonResult compute_epsilon(const AccountantInputs& inputs) {
  inputs.validate();
  EpsilonResult best{std::numeric_limits<double>::infinity(), 0};
  const double log_delta = std::log(inputs.delta);
  for (int order = 1; order <= inputs.max_order; ++order) {
    double alpha = 0.0;
    try {
      alpha = log_moment(order, inputs.noise_multiplier, inputs.sampling_probability);
    } catch (const AccountantOverflow&) {
      continue;
    }
    const double eps = (inputs.rounds * alpha - log_delta) / order;
    if (eps < best.epsilon) best = {eps, order};
  }
  if (best.order == 0)
    throw AccountantOverflow(inputs.max_order,
                             "every order overflowed; use a larger noise multiplier or a smaller maximum order");
  return best;
}

double noise_for_epsilon(double target_epsilon, double sampling_probability, int rounds, double delta,
                         int max_order) {
  if (!(target_epsilon > 0.0)) throw std::invalid_argument("noise_for_epsilon: target must be positive");
  auto eps_at = [&](double sigma) {
    return compute_epsilon({sigma, sampling_probability, rounds, delta, max_order}).epsilon;
  };
  double lo = 0.3;
  double hi = 64.0;
  double eps_lo = eps_at(lo);
  double eps_hi = eps_at(hi);
  if (target_epsilon > eps_lo || target_epsilon < eps_hi)
    throw std::out_of_range("noise_for_epsilon: target " + std::to_string(target_epsilon) +
                            " outside reachable range [" + std::to_string(eps_hi) + ", " + std::to_string(eps_lo) +
                            "] for sigma in [0.3, 64]");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double eps_mid = eps_at(mid);
    if (eps_mid > eps_lo || eps_mid < eps_hi)
      throw std::logic_error("noise_for_epsilon: epsilon is not monotone in sigma near " + std::to_string(mid));
    if (std::abs(eps_mid - target_epsilon) < 1e-2) return mid;
    if (eps_mid > target_epsilon) {
      lo = mid;
      eps_lo = eps_mid;
    } else {
      hi = mid;
      eps_hi = eps_mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace dpsurv
