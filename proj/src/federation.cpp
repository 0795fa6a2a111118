#include "dpsurv/federation.hpp"

#include "dpsurv/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace dpsurv {
namespace {

constexpr double kNormSlack = 1e-12;

void gather_rows(const SurvivalDataset& data, const std::vector<Eigen::Index>& perm, std::size_t begin,
                 std::size_t end, Eigen::MatrixXd& x, Eigen::VectorXd& t, Eigen::VectorXi& e) {
  const auto rows = static_cast<Eigen::Index>(end - begin);
  x.resize(rows, data.feature_count());
  t.resize(rows);
  e.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::Index i = perm[begin + static_cast<std::size_t>(r)];
    x.row(r) = data.features.row(i);
    t[r] = data.durations[i];
    e[r] = data.events[i];
  }
}

bool due_for_evaluation(const FedConfig& config, int round) {
  if (round == config.rounds) return true;
  return config.eval_every > 0 && round % config.eval_every == 0;
}

}  // namespace

std::string_view scheme_name(Scheme scheme) {
  switch (scheme) {
    case Scheme::centralized: return "centralized";
    case Scheme::stdfed: return "stdfed";
    case Scheme::dpfed: return "dpfed";
    case Scheme::dpfed_post: return "dpfed-post";
  }
  return "unknown";
}

Scheme parse_scheme(std::string_view name) {
  for (auto s : {Scheme::centralized, Scheme::stdfed, Scheme::dpfed, Scheme::dpfed_post})
    if (scheme_name(s) == name) return s;
  throw std::invalid_argument("unknown scheme '" + std::string(name) + "'");
}

std::string_view optimizer_name(LocalOptimizer opt) { return opt == LocalOptimizer::adam ? "adam" : "sgd"; }

LocalOptimizer parse_optimizer(std::string_view name) {
  if (name == "adam") return LocalOptimizer::adam;
  if (name == "sgd") return LocalOptimizer::sgd;
  throw std::invalid_argument("unknown local optimizer '" + std::string(name) + "'");
}

void FedConfig::validate() const {
  if (clients < 1) throw std::invalid_argument("fed: need at least one client");
  if (selected < 1 || selected > clients) throw std::invalid_argument("fed: selected clients must lie in [1, N]");
  if (local_epochs < 0) throw std::invalid_argument("fed: local epochs must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("fed: batch size must be positive");
  if (rounds < 1) throw std::invalid_argument("fed: need at least one round");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("fed: learning rate must be non-negative");
  if (eval_every < 0) throw std::invalid_argument("fed: eval_every must be non-negative");
}

void PrivacyParams::validate(Scheme scheme) const {
  if (!(sensitivity > 0.0)) throw std::invalid_argument("privacy: sensitivity must be positive");
  if (!(noise_multiplier >= 0.0)) throw std::invalid_argument("privacy: noise multiplier must be non-negative");
  if (scheme == Scheme::dpfed_post && !(post_clip > 0.0))
    throw std::invalid_argument("privacy: post-processing bound must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("privacy: delta must lie in (0, 1)");
}

void train_epochs(const SurvivalModel& model, ParameterVector& params, const SurvivalDataset& data,
                  const TrainingOptions& options, AdamState<double>& adam, Rng& rng) {
  if (data.size() == 0) throw std::invalid_argument("train_epochs: empty dataset");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(data.size()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  const auto batch = static_cast<std::size_t>(options.batch_size);
  Eigen::MatrixXd x;
  Eigen::VectorXd t;
  Eigen::VectorXi e;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t begin = 0; begin < perm.size(); begin += batch) {
      gather_rows(data, perm, begin, std::min(perm.size(), begin + batch), x, t, e);
      const auto step = batch_loss(model, params, x, t, e, rng);
      if (!step) continue;
      if (options.optimizer == LocalOptimizer::adam)
        adam_step(adam, params, step->grad);
      else
        sgd_step(options.learning_rate, params, step->grad);
    }
  }
}

ParameterVector client_update(const SurvivalModel& model, const ParameterVector& global, const SurvivalDataset& shard,
                              const TrainingOptions& options, Rng& rng) {
  if (shard.size() == 0) throw std::invalid_argument("client_update: empty client dataset");
  ParameterVector local = global;
  auto adam = AdamState<double>::fresh(global.size(), options.learning_rate);
  train_epochs(model, local, shard, options, adam, rng);
  return local;
}

ParameterVector clip_l2(const ParameterVector& v, double bound) {
  if (!(bound > 0.0)) throw std::invalid_argument("clip_l2: bound must be positive");
  return v / std::max(1.0, v.norm() / bound);
}

ParameterVector aggregate(const std::vector<ParameterVector>& clipped, double sensitivity, double noise_multiplier,
                          Rng& rng) {
  if (clipped.empty()) throw std::invalid_argument("aggregate: no client updates");
  ParameterVector sum = ParameterVector::Zero(clipped.front().size());
  for (const auto& u : clipped) {
    if (u.size() != sum.size()) throw ShapeError("aggregate: client updates differ in length");
    if (u.norm() > sensitivity * (1.0 + kNormSlack))
      throw std::logic_error("aggregate: client update norm " + std::to_string(u.norm()) + " exceeds sensitivity " +
                             std::to_string(sensitivity));
    sum += u;
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = sensitivity * noise_multiplier;
  for (Eigen::Index i = 0; i < sum.size(); ++i) sum[i] += scale * normal(rng);
  return sum / static_cast<double>(clipped.size());
}

ParameterVector post_process(const ParameterVector& noisy_mean, double post_clip) {
  return clip_l2(noisy_mean, post_clip);
}

double calibrate_sensitivity(std::vector<double> norms) {
  if (norms.empty()) throw std::invalid_argument("calibrate_sensitivity: no update norms");
  std::sort(norms.begin(), norms.end());
  const std::size_t n = norms.size();
  return n % 2 == 1 ? norms[n / 2] : 0.5 * (norms[n / 2 - 1] + norms[n / 2]);
}

Rng client_stream(std::uint64_t seed, int round, int client) {
  return make_stream(seed, {stream_tag("client"), static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(client)});
}

Rng noise_stream(std::uint64_t seed, int round) {
  return make_stream(seed, {stream_tag("noise"), static_cast<std::uint64_t>(round)});
}

Rng central_stream(std::uint64_t seed) { return make_stream(seed, {stream_tag("central")}); }

std::vector<int> select_clients(const FedConfig& config, int round) {
  Rng rng = make_stream(config.seed, {stream_tag("select"), static_cast<std::uint64_t>(round)});
  std::vector<int> ids(static_cast<std::size_t>(config.clients));
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(static_cast<std::size_t>(config.selected));
  std::sort(ids.begin(), ids.end());
  return ids;
}

TrainingOptions local_options(const FedConfig& config) {
  return {config.local_epochs, config.batch_size, config.learning_rate, config.optimizer};
}

std::vector<double> warmup_update_norms(const FedConfig& config, const SurvivalModel& model,
                                        const std::vector<SurvivalDataset>& shards, const ParameterVector& initial) {
  config.validate();
  if (static_cast<int>(shards.size()) != config.clients)
    throw std::invalid_argument("warmup: one shard per client required");
  std::vector<double> norms(shards.size());
  const TrainingOptions options = local_options(config);
  parallel_for(shards.size(), config.workers, [&](std::size_t k) {
    Rng rng = client_stream(config.seed, 0, static_cast<int>(k));
    norms[k] = (client_update(model, initial, shards[k], options, rng) - initial).norm();
  });
  return norms;
}

TrainingResult run_federated(Scheme scheme, const FedConfig& config, const std::optional<PrivacyParams>& privacy,
                             const SurvivalModel& model, const std::vector<SurvivalDataset>& shards,
                             const ParameterVector& initial, const Evaluator& evaluate) {
  config.validate();
  if (scheme == Scheme::centralized) throw std::invalid_argument("run_federated: centralized is not a federated scheme");
  if (is_private(scheme)) {
    if (!privacy) throw std::invalid_argument("run_federated: " + std::string(scheme_name(scheme)) + " needs privacy parameters");
    privacy->validate(scheme);
  }
  if (static_cast<int>(shards.size()) != config.clients)
    throw std::invalid_argument("run_federated: expected " + std::to_string(config.clients) + " shards, got " +
                                std::to_string(shards.size()));

  const TrainingOptions options = local_options(config);
  TrainingResult result;
  result.params = initial;
  for (int round = 1; round <= config.rounds; ++round) {
    RoundRecord rec;
    rec.round = round;
    rec.selected = select_clients(config, round);

    std::vector<ParameterVector> deltas(rec.selected.size());
    parallel_for(rec.selected.size(), config.workers, [&](std::size_t k) {
      const int client = rec.selected[k];
      Rng rng = client_stream(config.seed, round, client);
      deltas[k] = client_update(model, result.params, shards[static_cast<std::size_t>(client)], options, rng) -
                  result.params;
    });
    for (const auto& d : deltas) rec.update_norms.push_back(d.norm());

    ParameterVector step;
    if (scheme == Scheme::stdfed) {
      ParameterVector sum = ParameterVector::Zero(result.params.size());
      for (const auto& d : deltas) sum += d;
      step = sum / static_cast<double>(deltas.size());
      rec.clipped_norms = rec.update_norms;
      rec.aggregate_norm = step.norm();
    } else {
      std::vector<ParameterVector> clipped;
      clipped.reserve(deltas.size());
      for (const auto& d : deltas) {
        clipped.push_back(clip_l2(d, privacy->sensitivity));
        rec.clipped_norms.push_back(clipped.back().norm());
      }
      rec.noise_tag = "noise/" + std::to_string(round);
      Rng noise = noise_stream(config.seed, round);
      step = aggregate(clipped, privacy->sensitivity, privacy->noise_multiplier, noise);
      rec.aggregate_norm = step.norm();
      if (scheme == Scheme::dpfed_post) {
        step = post_process(step, privacy->post_clip);
        if (step.norm() > privacy->post_clip * (1.0 + kNormSlack))
          throw std::logic_error("run_federated: post-processed step exceeds P");
      }
    }
    rec.applied_norm = step.norm();
    result.params += step;
    if (evaluate && due_for_evaluation(config, round)) rec.metrics = evaluate(result.params);
    result.trace.push_back(std::move(rec));
  }
  return result;
}

TrainingResult run_centralized(const FedConfig& config, const SurvivalModel& model, const SurvivalDataset& train,
                               const ParameterVector& initial, const Evaluator& evaluate) {
  config.validate();
  TrainingOptions options = local_options(config);
  TrainingResult result;
  result.params = initial;
  auto adam = AdamState<double>::fresh(initial.size(), config.learning_rate);
  Rng rng = central_stream(config.seed);
  for (int round = 1; round <= config.rounds; ++round) {
    const ParameterVector before = result.params;
    train_epochs(model, result.params, train, options, adam, rng);
    RoundRecord rec;
    rec.round = round;
    rec.applied_norm = (result.params - before).norm();
    rec.aggregate_norm = rec.applied_norm;
    if (evaluate && due_for_evaluation(config, round)) rec.metrics = evaluate(result.params);
    result.trace.push_back(std::move(rec));
  }
  return result;
}

}  // namespace dpsurv
