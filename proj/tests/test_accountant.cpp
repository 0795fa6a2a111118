#include "dpsurv/accountant.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace dpsurv;

TEST_CASE("full participation has the closed-form gaussian moment") {
  for (double sigma : {1.0, 2.0, 4.0})
    for (int order = 1; order <= 64; ++order) {
      const double exact = order * (order + 1.0) / (2.0 * sigma * sigma);
      INFO("sigma ", sigma, " order ", order);
      CHECK(std::abs(log_moment(order, sigma, 1.0) - exact) <= 1e-6 * exact);
    }
}

TEST_CASE("no participation costs nothing") {
  CHECK(log_moment(5, 2.0, 0.0) == 0.0);
}

TEST_CASE("subsampled moments match a fine trapezoid oracle") {
  for (double sigma : {1.0, 2.0, 3.0})
    for (double c : {0.1, 0.5, 0.9})
      for (int order : {1, 2, 4, 8, 16}) {
        INFO("sigma ", sigma, " C ", c, " order ", order);
        const double got = log_moment(order, sigma, c);
        const double want = oracle::log_moment(order, sigma, c);
        CHECK(std::abs(got - want) <= 1e-8 * std::max(1.0, std::abs(want)));
      }
}

TEST_CASE("moments grow with the order and shrink with the noise") {
  double prev = 0.0;
  for (int order = 1; order <= 32; ++order) {
    const double a = log_moment(order, 2.0, 0.5);
    CHECK(a >= prev);
    prev = a;
  }
  CHECK(log_moment(4, 3.0, 0.5) < log_moment(4, 2.0, 0.5));
  CHECK(log_moment(4, 2.0, 0.3) < log_moment(4, 2.0, 0.5));
}

TEST_CASE("epsilon for the ten-client setup") {
  const auto two = compute_epsilon({2.0, 0.5, 50, 1e-3, 128});
  const auto three = compute_epsilon({3.0, 0.5, 50, 1e-3, 128});
  CHECK(two.epsilon == doctest::Approx(8.955).epsilon(1e-3));
  CHECK(two.order == 2);
  CHECK(three.epsilon == doctest::Approx(5.372).epsilon(1e-3));
  CHECK(three.order == 3);
}

TEST_CASE("epsilon is monotone in rounds, sampling and delta") {
  const AccountantInputs base{2.0, 0.5, 50, 1e-3, 128};
  auto eps = [](AccountantInputs in) { return compute_epsilon(in).epsilon; };
  AccountantInputs more_rounds = base;
  more_rounds.rounds = 100;
  CHECK(eps(more_rounds) > eps(base));
  AccountantInputs less_sampling = base;
  less_sampling.sampling_probability = 0.2;
  CHECK(eps(less_sampling) < eps(base));
  AccountantInputs looser = base;
  looser.delta = 1e-2;
  CHECK(eps(looser) < eps(base));
}

TEST_CASE("accountant input validation") {
  CHECK_THROWS_AS(compute_epsilon({0.0, 0.5, 50, 1e-3, 128}), std::invalid_argument);
  CHECK_THROWS_AS(compute_epsilon({2.0, 1.5, 50, 1e-3, 128}), std::invalid_argument);
  CHECK_THROWS_AS(compute_epsilon({2.0, 0.5, 0, 1e-3, 128}), std::invalid_argument);
  CHECK_THROWS_AS(compute_epsilon({2.0, 0.5, 50, 1.0, 128}), std::invalid_argument);
  CHECK_THROWS_AS(log_moment(0, 2.0, 0.5), std::invalid_argument);
}

TEST_CASE("noise search inverts the epsilon computation") {
  for (double target : {2.0, 5.4, 8.9}) {
    const double sigma = noise_for_epsilon(target, 0.5, 50, 1e-3);
    CHECK(std::abs(compute_epsilon({sigma, 0.5, 50, 1e-3, 128}).epsilon - target) < 1e-2);
  }
  CHECK_THROWS(noise_for_epsilon(1e-4, 0.5, 50, 1e-3));
}
