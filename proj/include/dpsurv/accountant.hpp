#pragma once

#include <stdexcept>
#include <string>

namespace dpsurv {

class AccountantOverflow : public std::overflow_error {
 public:
  AccountantOverflow(int order, const std::string& what) : std::overflow_error(what), order_(order) {}
  int order() const { return order_; }

 private:
  int order_;
};

/// Client-level accounting inputs for the subsampled Gaussian mechanism.
/// Noise std is expressed in units of the sensitivity.
struct AccountantInputs {
  double noise_multiplier = 2.0;
  double sampling_probability = 0.5;
  int rounds = 50;
  double delta = 1e-3;
  int max_order = 128;

  void validate() const;
};

/// log max(E1, E2) for the pair eta0 = N(0, sigma^2) and
/// eta1 = (1 - C) N(0, sigma^2) + C N(1, sigma^2), where
///   E1 = int eta0 (eta0 / eta1)^order,  E2 = int eta1 (eta1 / eta0)^order.
/// Both integrals use refined composite Simpson in the log domain.
double log_moment(int order, double sigma, double sampling_probability);

struct EpsilonResult {
  double epsilon = 0.0;
  int order = 0;
};

/// min over integer orders 1..max_order of (rounds * alpha(order) - log delta) / order.
EpsilonResult compute_epsilon(const AccountantInputs& inputs);

/// Smallest-error noise multiplier in [0.3, 64] whose epsilon is within 1e-2 of
/// the target, by bisection.
double noise_for_epsilon(double target_epsilon, double sampling_probability, int rounds, double delta,
                         int max_order = 128);

}  // namespace dpsurv
