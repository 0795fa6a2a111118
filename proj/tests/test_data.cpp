#include "dpsurv/data.hpp"
#include "dpsurv/metrics.hpp"

#include <doctest.h>

#include <set>

using namespace dpsurv;

namespace {

SurvivalDataset toy(Eigen::Index n, int every_nth_censored = 3) {
  SurvivalDataset d;
  d.features = Eigen::MatrixXd::Random(n, 2);
  d.durations = Eigen::VectorXd::LinSpaced(n, 1.0, static_cast<double>(n));
  d.events.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) d.events[i] = i % every_nth_censored == 0 ? 0 : 1;
  d.feature_names = {"a", "b"};
  return d;
}

// C-index of a risk score (higher risk, earlier event).
double risk_concordance(const Eigen::VectorXd& risk, const SurvivalDataset& d) {
  SurvivalCurves c;
  c.times = {0.0};
  c.survival = (-risk.array().exp()).exp().matrix().transpose();
  return concordance_td(c, d.durations, d.events);
}

}  // namespace

TEST_CASE("csv parsing picks label columns by name and keeps the rest as features") {
  const auto d = parse_csv("age,time,x,status\n50,12.5,1,1\n61,3,0,0\n", "time", "status");
  CHECK(d.size() == 2);
  CHECK(d.feature_count() == 2);
  CHECK(d.feature_names == std::vector<std::string>{"age", "x"});
  CHECK(d.durations[0] == 12.5);
  CHECK(d.events[1] == 0);
  CHECK(d.features(1, 0) == 61.0);
}

TEST_CASE("csv parsing reports the offending row and column") {
  CHECK_THROWS_WITH_AS(parse_csv("a,duration,event\n1,2,1\n1,,1\n"),
                       "csv row 3, column 'duration': missing or non-numeric value", DataError);
  CHECK_THROWS_WITH_AS(parse_csv("a,duration,event\n1,2,2\n"), "csv row 2: event value 2 is not 0 or 1", DataError);
  CHECK_THROWS_WITH_AS(parse_csv("a,duration,event\n1,0,1\n"), "csv row 2: duration must be positive", DataError);
  CHECK_THROWS_AS(parse_csv("a,event\n1,1\n"), DataError);
  CHECK_THROWS_AS(parse_csv("a,duration,event\n1,2\n"), DataError);
}

TEST_CASE("csv round trip is exact") {
  SurvivalDataset d = toy(20);
  d.features(3, 1) = 0.1 + 0.2;
  d.durations[5] = 1.0 / 3.0;
  const auto back = parse_csv(to_csv(d));
  CHECK(back.features == d.features);
  CHECK(back.durations == d.durations);
  CHECK(back.events == d.events);
  CHECK(back.feature_names == d.feature_names);
}

TEST_CASE("standardizer uses training statistics and zeroes constant columns") {
  Eigen::MatrixXd train(2, 2);
  train << 1, 10, 3, 10;
  const auto s = Standardizer::fit(train);
  const Eigen::MatrixXd z = s.apply(train);
  CHECK(z(0, 0) == -1.0);
  CHECK(z(1, 0) == 1.0);
  CHECK(z.col(1).isZero());
  Eigen::MatrixXd other(1, 2);
  other << 5, 11;
  const Eigen::MatrixXd zo = s.apply(other);
  CHECK(zo(0, 0) == 3.0);
  CHECK(zo(0, 1) == 0.0);
}

TEST_CASE("split sizes for the usual ten-client layout") {
  const auto small = split_and_partition(toy(100), 0.2, 10, 1);
  CHECK(small.test.size() == 20);
  CHECK(small.shards.size() == 10);
  for (const auto& s : small.shards) CHECK(s.size() == 8);

  const auto gbsg_sized = split_and_partition(toy(2232), 0.2, 10, 1);
  CHECK(gbsg_sized.test.size() == 446);
  int of179 = 0, of178 = 0;
  for (const auto& s : gbsg_sized.shards) (s.size() == 179 ? of179 : of178) += 1;
  CHECK(of179 == 6);
  CHECK(of178 == 4);
}

TEST_CASE("split is a seeded partition of all rows with events in every shard") {
  const auto d = toy(203, 2);
  const auto a = split_and_partition(d, 0.2, 10, 7);
  const auto b = split_and_partition(d, 0.2, 10, 7);
  CHECK(a.test == b.test);
  CHECK(a.shards == b.shards);
  std::set<Eigen::Index> seen(a.test.begin(), a.test.end());
  for (const auto& s : a.shards) {
    int ev = 0;
    for (auto i : s) {
      CHECK(seen.insert(i).second);
      ev += d.events[i];
    }
    CHECK(ev >= 2);
  }
  CHECK(seen.size() == 203);
  CHECK(split_and_partition(d, 0.2, 10, 8).test != a.test);

  SurvivalDataset few = toy(30);
  few.events.setZero();
  few.events[0] = 1;
  CHECK_THROWS_AS(split_and_partition(few, 0.2, 5, 1), DataError);
  CHECK_THROWS_AS(split_and_partition(toy(12), 0.2, 10, 1), DataError);
}

TEST_CASE("synthetic defaults censor about forty percent") {
  const auto d = generate_synthetic(SynthSpec{});
  CHECK(d.size() == 2000);
  CHECK(d.feature_count() == 7);
  const double censored = 1.0 - static_cast<double>(d.event_count()) / d.size();
  CHECK(censored == doctest::Approx(0.40).epsilon(0.075));  // within 3 points
  CHECK((d.durations.array() > 0).all());
  const auto again = generate_synthetic(SynthSpec{});
  CHECK(again.durations == d.durations);
}

TEST_CASE("censoring rate calibration recovers the default rate") {
  const double rate = censoring_rate_for_fraction(SynthSpec{}, 0.4);
  CHECK(rate == doctest::Approx(0.0142).epsilon(0.02));
  SynthSpec spec;
  spec.censoring_rate = rate;
  spec.samples = 20000;
  const auto d = generate_synthetic(spec);
  CHECK(1.0 - static_cast<double>(d.event_count()) / d.size() == doctest::Approx(0.4).epsilon(0.03));
}

TEST_CASE("synthetic risk is informative only when beta is nonzero") {
  SynthSpec spec;
  const auto informative = generate_synthetic(spec);
  CHECK(risk_concordance(informative.features * spec.beta, informative) > 0.7);

  spec.beta.setZero();
  const auto null = generate_synthetic(spec);
  const Eigen::VectorXd direction = (Eigen::VectorXd(7) << 0.9, -0.7, 0.6, -0.5, 0.4, 0.3, 0.0).finished();
  CHECK(std::abs(risk_concordance(null.features * direction, null) - 0.5) < 0.02);
}

TEST_CASE("discretize assigns floor bins and covers the largest duration") {
  Eigen::VectorXd t(4);
  t << 0.5, 12.0, 25.0, 11.99;
  const auto [bins, idx] = discretize(t, 12.0);
  CHECK(bins.bin_count() == 3);
  CHECK(idx[0] == 0);
  CHECK(idx[1] == 1);
  CHECK(idx[2] == 2);
  CHECK(idx[3] == 0);
  CHECK_THROWS_AS(discretize(t, 0.0), DataError);
}

TEST_CASE("dataset validation") {
  auto d = toy(5);
  d.validate();
  d.events[0] = 3;
  CHECK_THROWS_AS(d.validate(), DataError);
  d = toy(5);
  d.durations[1] = -1;
  CHECK_THROWS_AS(d.validate(), DataError);
  const auto both = concatenate({toy(3), toy(4)});
  CHECK(both.size() == 7);
}
