// End-to-end acceptance checks. Prints one PASS/FAIL/SKIP line per criterion
// and exits nonzero if any criterion fails.
#include "dpsurv/accountant.hpp"
#include "dpsurv/experiment.hpp"
#include "dpsurv/metrics.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <sstream>
#include <string>

using namespace dpsurv;

namespace {

// Seeds for the synthetic federation runs; fixed so the trend checks are reproducible.
const std::vector<std::uint64_t> kSeeds = {0, 1, 2, 3, 4};

enum class Verdict { pass, fail, skip };

struct Outcome {
  Verdict verdict = Verdict::fail;
  std::string detail;
};

int failures = 0;

void report(int number, double limit_seconds, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {Verdict::fail, std::string("exception: ") + e.what()};
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (out.verdict == Verdict::pass && seconds > limit_seconds) {
    out.verdict = Verdict::fail;
    out.detail += "; exceeded time limit";
  }
  const char* tag = out.verdict == Verdict::pass ? "PASS" : out.verdict == Verdict::fail ? "FAIL" : "SKIP";
  if (out.verdict == Verdict::fail) ++failures;
  std::printf("criterion %2d: %s  %s  (%.1f s, limit %.0f s)\n", number, tag, out.detail.c_str(), seconds,
              limit_seconds);
  std::fflush(stdout);
}

Outcome verdict(bool ok, std::string detail) { return {ok ? Verdict::pass : Verdict::fail, std::move(detail)}; }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// A default-sized synthetic federation for one seed, prepared the same way the
// experiment runner does it.
struct Federation {
  SurvivalDataset train;
  SurvivalDataset test;
  std::vector<SurvivalDataset> shards;
  SurvivalModel model;
  ParameterVector initial;
  FedConfig fed;
  Evaluator evaluate;
  StepFunction censoring{1.0};
  std::vector<double> grid;
};

std::unique_ptr<Federation> synthetic_federation(std::uint64_t seed) {
  const ExperimentConfig config;
  const auto data = load_experiment_data(config);
  const auto split = split_and_partition(data, config.test_fraction, config.fed.clients, seed);
  auto f = std::make_unique<Federation>();
  std::vector<SurvivalDataset> raw;
  for (const auto& rows : split.shards) raw.push_back(data.subset(rows));
  const auto scaler = Standardizer::fit(concatenate(raw).features);
  for (auto& s : raw) f->shards.push_back(scaler.apply(std::move(s)));
  f->train = concatenate(f->shards);
  f->test = scaler.apply(data.subset(split.test));
  f->model = SurvivalModel::make(ModelKind::coxph, data.feature_count(), f->train.durations);
  Rng init = make_stream(seed, {stream_tag("init"), static_cast<std::uint64_t>(ModelKind::coxph)});
  f->initial = glorot_uniform(f->model.network, init);
  f->fed = config.fed;
  f->fed.seed = seed;
  f->censoring = censoring_km(f->train.durations, f->train.events);
  f->grid = evaluation_grid(f->test.durations, f->censoring, 100);
  Federation* self = f.get();
  f->evaluate = [self](const ParameterVector& p) {
    const auto fitted = fit_predictor(self->model, p, self->train.features, self->train.durations, self->train.events);
    const auto curves = predict_survival(self->model, p, fitted, self->test.features);
    return evaluate_metrics(curves, self->test.durations, self->test.events, self->censoring, self->grid);
  };
  return f;
}

bool same_trace(const std::vector<RoundRecord>& a, const std::vector<RoundRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t r = 0; r < a.size(); ++r)
    if (a[r].round != b[r].round || a[r].selected != b[r].selected || a[r].update_norms != b[r].update_norms ||
        a[r].clipped_norms != b[r].clipped_norms || a[r].aggregate_norm != b[r].aggregate_norm ||
        a[r].applied_norm != b[r].applied_norm || a[r].metrics != b[r].metrics)
      return false;
  return true;
}

Outcome accountant_vs_reference() {
  const auto two = compute_epsilon({2.0, 0.5, 50, 1e-3, 128});
  const auto three = compute_epsilon({3.0, 0.5, 50, 1e-3, 128});
  const double lo = std::min(two.epsilon, three.epsilon);
  const double hi = std::max(two.epsilon, three.epsilon);
  const bool ok = std::abs(lo - 5.4) <= 0.2 && std::abs(hi - 8.9) <= 0.2;
  return verdict(ok, fmt("sigma=2 -> eps %.3f, sigma=3 -> eps %.3f; unordered set vs {5.4, 8.9} +-0.2", two.epsilon,
                         three.epsilon));
}

Outcome accountant_closed_form() {
  double worst = 0.0;
  for (double sigma : {1.0, 2.0, 4.0})
    for (int order = 1; order <= 64; ++order) {
      const double exact = order * (order + 1.0) / (2.0 * sigma * sigma);
      worst = std::max(worst, std::abs(log_moment(order, sigma, 1.0) - exact) / exact);
    }
  return verdict(worst <= 1e-6, fmt("max relative error %.2e over sigma {1,2,4}, order 1..64 (tol 1e-6)", worst));
}

Outcome gradient_check() {
  std::mt19937_64 rng(20210601);
  std::uniform_int_distribution<int> size(4, 10);
  std::uniform_int_distribution<int> dims(2, 6);
  std::ostringstream detail;
  bool ok = true;
  for (auto kind : {ModelKind::coxph, ModelKind::coxcc, ModelKind::coxtime, ModelKind::deephit}) {
    double worst = 0.0;
    const int instances = 20;
    for (int trial = 0; trial < instances; ++trial) {
      const int n = size(rng);
      const int p = dims(rng);
      const auto inst = oracle::random_instance(rng, n, p, 0.3, 10);
      const auto model = SurvivalModel::make(kind, p, inst.t, {{32, 32}, 2, 6.0, {}});
      Rng draw(static_cast<std::uint64_t>(trial));
      const auto pairs = sample_controls(inst.t, inst.e, 2, draw);
      // finite differences are only valid away from ReLU kinks
      const ParameterVector params = oracle::kink_free_parameters(model, oracle::network_rows(model, inst.x, inst.t, pairs), rng);
      const auto analytic = evaluate_loss(model, params, inst.x, inst.t, inst.e, pairs).grad;
      auto loss = [&](const ParameterVector& q) {
        return evaluate_loss(model, q, inst.x, inst.t, inst.e, pairs, false).loss;
      };
      const ParameterVector numeric = finite_difference_gradient(loss, params, 1e-6);
      const double scale = std::max({analytic.norm(), numeric.norm(), 1e-8});
      worst = std::max(worst, (analytic - numeric).norm() / scale);
    }
    ok = ok && worst <= 1e-4;
    detail << model_name(kind) << " " << fmt("%.1e", worst) << " ";
  }
  return verdict(ok, "max relative error over 20 instances each: " + detail.str() + "(tol 1e-4)");
}

Outcome metric_oracles() {
  std::mt19937_64 rng(7);
  int concordance_mismatch = 0;
  double worst_bs = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto test = oracle::random_instance(rng, 20, 1, 0.3, 15);
    const auto train = oracle::random_instance(rng, 30, 1, 0.3, 15);
    SurvivalCurves c;
    c.times = {2.5, 7.5, 15.0, 25.0, 32.5};
    c.survival.resize(5, 20);
    std::uniform_real_distribution<double> u(0.55, 1.0);
    for (Eigen::Index j = 0; j < 20; ++j) {
      double s = 1.0;
      for (Eigen::Index k = 0; k < 5; ++k) c.survival(k, j) = (s *= u(rng));
    }
    if (concordance_td(c, test.t, test.e) != oracle::concordance(c, test.t, test.e)) ++concordance_mismatch;
    const auto g = censoring_km(train.t, train.e);
    for (double at : {2.5, 6.0, 12.5, 20.0, 30.0}) {
      worst_bs = std::max(worst_bs, std::abs(brier_score(at, c, test.t, test.e, g) -
                                             oracle::brier(at, c, test.t, test.e, train.t, train.e)));
      worst_bs = std::max(worst_bs, std::abs(binomial_log_likelihood(at, c, test.t, test.e, g) -
                                             oracle::bll(at, c, test.t, test.e, train.t, train.e)));
    }
  }
  Eigen::VectorXd t(3);
  t << 1, 2, 3;
  Eigen::VectorXi all(3), none = Eigen::VectorXi::Zero(3), mixed(3);
  all << 1, 1, 1;
  mixed << 1, 0, 1;
  const auto a = kaplan_meier(t, all);
  const auto b = kaplan_meier(t, none);
  const auto m = kaplan_meier(t, mixed);
  const bool km_ok = a(1) == 2.0 / 3 && a(2) == 1.0 / 3 && a(3) == 0.0 && a(0.5) == 1.0 && b(0.5) == 1.0 &&
                     b(3) == 1.0 && m(1) == 2.0 / 3 && m(2.5) == 2.0 / 3 && m(3) == 0.0;
  const bool ok = concordance_mismatch == 0 && worst_bs <= 1e-12 && km_ok;
  return verdict(ok, fmt("C-index mismatches %.0f/50; max BS/BLL deviation %.1e (tol 1e-12); KM hand examples ",
                         concordance_mismatch, worst_bs) +
                         (km_ok ? "exact" : "WRONG"));
}

Outcome dp_mechanics() {
  auto f = synthetic_federation(kSeeds.front());
  const double s = calibrate_sensitivity(warmup_update_norms(f->fed, f->model, f->shards, f->initial));
  const PrivacyParams privacy{s, 2.0, 2.0 * s, 1e-3};
  const auto run = run_federated(Scheme::dpfed_post, f->fed, privacy, f->model, f->shards, f->initial);
  double worst_clip = 0.0, worst_step = 0.0;
  for (const auto& r : run.trace) {
    for (double n : r.clipped_norms) worst_clip = std::max(worst_clip, n / s);
    worst_step = std::max(worst_step, r.applied_norm / (2.0 * s));
  }
  const bool bounds = run.trace.size() == 50 && worst_clip <= 1.0 + 1e-12 && worst_step <= 1.0 + 1e-12;

  // empirical noise std of the aggregate, S = 2, sigma = 3, K = 5
  Rng rng(99);
  std::vector<ParameterVector> updates(5, ParameterVector::Zero(10));
  double sum = 0.0, sum2 = 0.0;
  for (int d = 0; d < 10000; ++d) {
    const ParameterVector noise = aggregate(updates, 2.0, 3.0, rng);
    sum += noise.sum();
    sum2 += noise.squaredNorm();
  }
  const double n = 1e5;
  const double sd = std::sqrt(sum2 / n - (sum / n) * (sum / n));
  const bool noise_ok = std::abs(sd / 1.2 - 1.0) <= 0.02;
  return verdict(bounds && noise_ok,
                 fmt("50 rounds: max |clipped|/S %.15f, max |step|/P %.15f; noise std %.4f vs S*sigma/K 1.2", worst_clip,
                     worst_step, sd));
}

Outcome degeneracies() {
  auto f = synthetic_federation(kSeeds.front());
  const auto stdfed = run_federated(Scheme::stdfed, f->fed, std::nullopt, f->model, f->shards, f->initial, f->evaluate);
  const PrivacyParams open{std::numeric_limits<double>::max(), 0.0, 1.0, 1e-3};
  const auto dp_open = run_federated(Scheme::dpfed, f->fed, open, f->model, f->shards, f->initial, f->evaluate);
  const bool first = dp_open.params == stdfed.params && same_trace(dp_open.trace, stdfed.trace);

  const double s = calibrate_sensitivity(warmup_update_norms(f->fed, f->model, f->shards, f->initial));
  const PrivacyParams noisy{s, 2.0, 1.0, 1e-3};
  const auto dp = run_federated(Scheme::dpfed, f->fed, noisy, f->model, f->shards, f->initial, f->evaluate);
  double largest = 0.0;
  for (const auto& r : dp.trace) largest = std::max(largest, r.aggregate_norm);
  const PrivacyParams loose{s, 2.0, 2.0 * largest, 1e-3};
  const auto post = run_federated(Scheme::dpfed_post, f->fed, loose, f->model, f->shards, f->initial, f->evaluate);
  const bool second = post.params == dp.params && same_trace(post.trace, dp.trace);
  return verdict(first && second, std::string("dpfed(sigma=0, S=max double) == stdfed: ") + (first ? "identical" : "DIFFERENT") +
                                      "; dpfed-post(P >= all norms) == dpfed: " + (second ? "identical" : "DIFFERENT"));
}

ExperimentConfig synthetic_grid() {
  ExperimentConfig c;
  c.models = {ModelKind::coxph};
  c.schemes = {Scheme::centralized, Scheme::stdfed, Scheme::dpfed, Scheme::dpfed_post};
  c.sigmas = {2.0};
  c.post_clip_factor = 2.0;
  c.seeds = kSeeds;
  c.write_traces = false;
  return c;
}

std::optional<ExperimentRun> grid_run;

Outcome federation_sanity() {
  grid_run = run_experiment(synthetic_grid());
  const auto& r = grid_run->report;
  const auto* central = r.find(Scheme::centralized, ModelKind::coxph);
  const auto* fed = r.find(Scheme::stdfed, ModelKind::coxph);
  if (!r.complete()) return verdict(false, "experiment cells failed: " + format_table(r));
  const double gap = std::abs(fed->mean.concordance - central->mean.concordance);
  return verdict(gap <= 0.03, fmt("stdfed C %.4f vs centralized C %.4f over 5 seeds, gap %.4f (tol 0.03)",
                                  fed->mean.concordance, central->mean.concordance, gap));
}

Outcome post_processing_trend() {
  if (!grid_run) return verdict(false, "synthetic grid did not run");
  const auto& r = grid_run->report;
  const auto* dp = r.find(Scheme::dpfed, ModelKind::coxph, 2.0);
  const auto* post = r.find(Scheme::dpfed_post, ModelKind::coxph, 2.0);
  const double rd = rstd(*dp, Metric::concordance);
  const double rp = rstd(*post, Metric::concordance);
  const bool ok = post->mean.concordance >= dp->mean.concordance && rp <= rd;
  return verdict(ok, fmt("sigma=2, P=2S: dpfed-post C %.4f (rstd %.4f) vs dpfed C %.4f (rstd %.4f)",
                         post->mean.concordance, rp, dp->mean.concordance, rd));
}

Outcome determinism() {
  if (!grid_run) return verdict(false, "synthetic grid did not run");
  auto config = synthetic_grid();
  config.workers = 4;
  config.fed.workers = 2;
  const auto again = run_experiment(config);
  const bool ok = format_csv(again.report) == format_csv(grid_run->report) &&
                  format_records(again.report) == format_records(grid_run->report);
  return verdict(ok, std::string("rerun with 4 cell workers x 2 client workers: report ") +
                         (ok ? "bit-identical" : "DIFFERS"));
}

Outcome gbsg_counts() {
  const char* path = std::getenv("DPSURV_GBSG_CSV");
  if (!path || !std::filesystem::exists(path))
    return {Verdict::skip, "set DPSURV_GBSG_CSV to a GBSG csv (duration, event columns) to run"};
  const auto data = load_csv(path);
  const auto split = split_and_partition(data, 0.2, 10, 0);
  int small = 0, large = 0, other = 0;
  for (const auto& s : split.shards) (s.size() == 178 ? small : s.size() == 179 ? large : other) += 1;
  const bool ok = data.size() == 2232 && data.event_count() == 1272 && other == 0;
  return verdict(ok, fmt("n=%.0f, events=%.0f (%.1f%%), shards of 178: %.0f", static_cast<double>(data.size()),
                         static_cast<double>(data.event_count()), 100.0 * data.event_count() / data.size(), small) +
                         fmt(", of 179: %.0f, other: %.0f", large, other));
}

}  // namespace

int main() {
  report(1, 5, accountant_vs_reference);
  report(2, 5, accountant_closed_form);
  report(3, 60, gradient_check);
  report(4, 30, metric_oracles);
  report(5, 60, dp_mechanics);
  report(6, 300, degeneracies);
  report(7, 900, federation_sanity);
  report(8, 1800, post_processing_trend);
  report(9, 900, determinism);
  report(10, 60, gbsg_counts);
  std::printf("%s: %d criterion failure(s)\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
