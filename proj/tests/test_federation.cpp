#include "dpsurv/federation.hpp"

#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <limits>
#include <numeric>

using namespace dpsurv;

namespace {

struct Fixture {
  SurvivalDataset train;
  std::vector<SurvivalDataset> shards;
  SurvivalModel model;
  ParameterVector initial;
};

Fixture small_federation(int clients = 4, Eigen::Index n = 240) {
  SynthSpec spec;
  spec.samples = n;
  const auto data = generate_synthetic(spec);
  const auto split = split_and_partition(data, 0.2, clients, 3);
  Fixture f;
  for (const auto& rows : split.shards) f.shards.push_back(data.subset(rows));
  f.train = concatenate(f.shards);
  f.model = SurvivalModel::make(ModelKind::coxph, data.feature_count(), f.train.durations);
  Rng rng = make_stream(3, {stream_tag("init")});
  f.initial = glorot_uniform(f.model.network, rng);
  return f;
}

FedConfig small_config(int clients = 4) {
  FedConfig c;
  c.clients = clients;
  c.selected = 2;
  c.local_epochs = 2;
  c.batch_size = 32;
  c.rounds = 4;
  c.learning_rate = 1e-3;
  c.seed = 11;
  return c;
}

bool same_trace(const std::vector<RoundRecord>& a, const std::vector<RoundRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t r = 0; r < a.size(); ++r) {
    if (a[r].round != b[r].round || a[r].selected != b[r].selected || a[r].update_norms != b[r].update_norms ||
        a[r].clipped_norms != b[r].clipped_norms || a[r].aggregate_norm != b[r].aggregate_norm ||
        a[r].applied_norm != b[r].applied_norm || a[r].metrics != b[r].metrics)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("clip_l2 reference cases") {
  ParameterVector v(2);
  v << 3.0, 4.0;
  CHECK(clip_l2(v, 10.0) == v);
  const auto half = clip_l2(v, 2.5);
  CHECK(half.norm() == doctest::Approx(2.5));
  CHECK(half[0] / half[1] == doctest::Approx(0.75));
  CHECK(clip_l2(ParameterVector::Zero(3), 1.0).isZero());
  CHECK_THROWS_AS(clip_l2(v, 0.0), std::invalid_argument);
}

TEST_CASE("post_process is clip_l2") {
  ParameterVector v = ParameterVector::Random(20) * 5;
  CHECK(post_process(v, 0.7) == clip_l2(v, 0.7));
  const ParameterVector big = v.normalized() * 7.0;
  CHECK(post_process(big, 0.7).norm() == doctest::Approx(0.7));
  const ParameterVector small = v.normalized() * 0.3;
  CHECK(post_process(small, 0.7) == small);
}

TEST_CASE("aggregate without noise is the mean of the updates") {
  std::vector<ParameterVector> u = {ParameterVector::Constant(3, 0.2), ParameterVector::Constant(3, -0.1)};
  Rng rng(0);
  const auto m = aggregate(u, 1.0, 0.0, rng);
  CHECK(m[0] == doctest::Approx(0.05));
  CHECK_THROWS_AS(aggregate({}, 1.0, 1.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(aggregate({ParameterVector::Constant(3, 1.0)}, 1.0, 1.0, rng), std::logic_error);
}

TEST_CASE("aggregate noise has per-coordinate std S sigma / K") {
  auto empirical_std = [](double s, double sigma, int k) {
    Rng rng(5);
    std::vector<ParameterVector> updates(static_cast<std::size_t>(k), ParameterVector::Zero(10));
    updates[0][0] = 0.5 * s;
    const ParameterVector truth = [&] {
      ParameterVector t = ParameterVector::Zero(10);
      for (const auto& u : updates) t += u;
      return ParameterVector(t / k);
    }();
    double sum = 0.0, sum2 = 0.0;
    const int draws = 10000;  // 10 coordinates each: 1e5 samples
    for (int d = 0; d < draws; ++d) {
      const ParameterVector noise = aggregate(updates, s, sigma, rng) - truth;
      sum += noise.sum();
      sum2 += noise.squaredNorm();
    }
    const double n = draws * 10.0;
    return std::sqrt(sum2 / n - (sum / n) * (sum / n));
  };
  CHECK(empirical_std(1.0, 1.0, 1) == doctest::Approx(1.0).epsilon(0.02));
  CHECK(empirical_std(2.0, 3.0, 5) == doctest::Approx(1.2).epsilon(0.02));
}

TEST_CASE("sensitivity is the median warm-up norm") {
  CHECK(calibrate_sensitivity({3, 1, 2}) == 2.0);
  CHECK(calibrate_sensitivity({4, 1, 3, 2}) == 2.5);
  CHECK(calibrate_sensitivity({0.7, 0.7, 0.7, 0.7}) == 0.7);
  CHECK_THROWS_AS(calibrate_sensitivity({}), std::invalid_argument);
}

TEST_CASE("client selection is uniform without replacement") {
  FedConfig c;
  std::vector<int> hits(10, 0);
  const int rounds = 10000;
  for (int r = 1; r <= rounds; ++r) {
    const auto s = select_clients(c, r);
    CHECK(s.size() == 5);
    for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i - 1] < s[i]);
    for (int k : s) ++hits[static_cast<std::size_t>(k)];
  }
  for (int h : hits) CHECK(std::abs(static_cast<double>(h) / rounds - 0.5) < 0.01);
  CHECK(select_clients(c, 3) == select_clients(c, 3));
}

TEST_CASE("client update is a no-op with zero epochs or zero learning rate") {
  auto f = small_federation();
  Rng rng(1);
  CHECK(client_update(f.model, f.initial, f.shards[0], {0, 32, 1e-3, LocalOptimizer::adam}, rng) == f.initial);
  CHECK(client_update(f.model, f.initial, f.shards[0], {3, 32, 0.0, LocalOptimizer::adam}, rng) == f.initial);
  CHECK(client_update(f.model, f.initial, f.shards[0], {3, 32, 0.0, LocalOptimizer::sgd}, rng) == f.initial);
}

TEST_CASE("one full-batch epoch equals a single adam step on the full gradient") {
  auto f = small_federation();
  const auto& shard = f.shards[1];
  Rng rng(2);
  Rng replay = rng;
  const auto local = client_update(f.model, f.initial, shard, {1, static_cast<int>(shard.size()), 1e-3, LocalOptimizer::adam}, rng);
  // same row order as the client's single shuffled batch
  std::vector<Eigen::Index> order(static_cast<std::size_t>(shard.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), replay);
  const auto batch = shard.subset(order);
  const auto g = evaluate_loss(f.model, f.initial, batch.features, batch.durations, batch.events, {});
  ParameterVector expected = f.initial;
  auto adam = AdamState<double>::fresh(expected.size(), 1e-3);
  adam_step(adam, expected, g.grad);
  CHECK((local - expected).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("a federation of one full-batch client is centralized training") {
  auto f = small_federation(1, 120);
  FedConfig c = small_config(1);
  c.selected = 1;
  c.rounds = 1;
  c.local_epochs = 3;
  c.batch_size = static_cast<int>(f.train.size());
  const auto fed = run_federated(Scheme::stdfed, c, std::nullopt, f.model, f.shards, f.initial);
  const auto central = run_centralized(c, f.model, f.train, f.initial);
  // The two runs shuffle rows with different streams, so the full-batch sums
  // differ only by floating-point summation order.
  CHECK((fed.params - central.params).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((fed.params - f.initial).cwiseAbs().maxCoeff() > 1e-4);
}

TEST_CASE("dp runs respect the sensitivity and post-clip bounds") {
  auto f = small_federation();
  FedConfig c = small_config();
  c.rounds = 6;
  const auto norms = warmup_update_norms(c, f.model, f.shards, f.initial);
  CHECK(norms.size() == 4);
  const double s = calibrate_sensitivity(norms);
  const PrivacyParams privacy{s, 2.0, 2.0 * s, 1e-3};
  const auto run = run_federated(Scheme::dpfed_post, c, privacy, f.model, f.shards, f.initial);
  for (const auto& r : run.trace) {
    for (double n : r.clipped_norms) CHECK(n <= s * (1 + 1e-12));
    CHECK(r.applied_norm <= 2.0 * s * (1 + 1e-12));
    CHECK(r.noise_tag == "noise/" + std::to_string(r.round));
  }
  CHECK_THROWS_AS(run_federated(Scheme::dpfed, c, std::nullopt, f.model, f.shards, f.initial), std::invalid_argument);
}

TEST_CASE("dpfed degenerates to stdfed and dpfed-post to dpfed") {
  auto f = small_federation();
  const FedConfig c = small_config();
  const auto std_run = run_federated(Scheme::stdfed, c, std::nullopt, f.model, f.shards, f.initial);
  const PrivacyParams open{std::numeric_limits<double>::max(), 0.0, 1.0, 1e-3};
  const auto dp_open = run_federated(Scheme::dpfed, c, open, f.model, f.shards, f.initial);
  CHECK(dp_open.params == std_run.params);
  CHECK(same_trace(dp_open.trace, std_run.trace));

  const PrivacyParams noisy{0.05, 2.0, 1.0, 1e-3};
  const auto dp = run_federated(Scheme::dpfed, c, noisy, f.model, f.shards, f.initial);
  double largest = 0.0;
  for (const auto& r : dp.trace) largest = std::max(largest, r.aggregate_norm);
  const PrivacyParams loose{0.05, 2.0, 2.0 * largest, 1e-3};
  const auto post = run_federated(Scheme::dpfed_post, c, loose, f.model, f.shards, f.initial);
  CHECK(post.params == dp.params);
  CHECK(same_trace(post.trace, dp.trace));
}

TEST_CASE("parallel client updates reproduce the serial run bit for bit") {
  auto f = small_federation();
  FedConfig c = small_config();
  const PrivacyParams privacy{0.05, 2.0, 0.1, 1e-3};
  const auto serial = run_federated(Scheme::dpfed_post, c, privacy, f.model, f.shards, f.initial);
  c.workers = 3;
  const auto parallel = run_federated(Scheme::dpfed_post, c, privacy, f.model, f.shards, f.initial);
  CHECK(serial.params == parallel.params);
  CHECK(same_trace(serial.trace, parallel.trace));
}

TEST_CASE("evaluation schedule") {
  auto f = small_federation();
  FedConfig c = small_config();
  c.rounds = 5;
  c.eval_every = 2;
  int calls = 0;
  const auto run = run_federated(Scheme::stdfed, c, std::nullopt, f.model, f.shards, f.initial,
                                 [&](const ParameterVector&) { return MetricTriple{0.5 + 0.01 * ++calls, 0, 0}; });
  CHECK(calls == 3);  // rounds 2, 4 and the final round
  CHECK_FALSE(run.trace[0].metrics.has_value());
  CHECK(run.trace[1].metrics.has_value());
  CHECK(run.trace[4].metrics.has_value());
}

TEST_CASE("config validation and scheme names") {
  FedConfig c;
  CHECK(c.sampling_probability() == 0.5);
  c.selected = 11;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  for (auto s : {Scheme::centralized, Scheme::stdfed, Scheme::dpfed, Scheme::dpfed_post})
    CHECK(parse_scheme(scheme_name(s)) == s);
  CHECK(scheme_name(Scheme::dpfed_post) == "dpfed-post");
  CHECK_THROWS_AS(parse_scheme("fedprox"), std::invalid_argument);
  CHECK(parse_optimizer("sgd") == LocalOptimizer::sgd);
}
