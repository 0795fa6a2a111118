#include "dpsurv/survival_losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace dpsurv {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

void check_labels(Eigen::Index n, const Eigen::VectorXd& durations, const Eigen::VectorXi& events) {
  if (durations.size() != n || events.size() != n)
    throw std::invalid_argument("scores, durations and events must have equal length");
  for (Eigen::Index i = 0; i < n; ++i)
    if (events[i] != 0 && events[i] != 1)
      throw std::invalid_argument("event indicator at " + std::to_string(i) + " is not 0 or 1");
}

std::vector<Eigen::Index> ascending_order(const Eigen::VectorXd& durations) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(durations.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return durations[a] < durations[b]; });
  return order;
}

// [begin, end) ranges of tied durations within an ascending order.
std::vector<std::pair<std::size_t, std::size_t>> tie_groups(const std::vector<Eigen::Index>& order,
                                                            const Eigen::VectorXd& durations) {
  std::vector<std::pair<std::size_t, std::size_t>> groups;
  for (std::size_t b = 0; b < order.size();) {
    std::size_t e = b + 1;
    while (e < order.size() && durations[order[e]] == durations[order[b]]) ++e;
    groups.emplace_back(b, e);
    b = e;
  }
  return groups;
}

}  // namespace

LossResult coxph_loss(const Eigen::VectorXd& scores, const Eigen::VectorXd& durations,
                      const Eigen::VectorXi& events) {
  const Eigen::Index n = scores.size();
  check_labels(n, durations, events);
  LossResult out;
  out.grad = Eigen::MatrixXd::Zero(n, 1);
  if (n == 0 || events.sum() == 0) return out;

  const auto order = ascending_order(durations);
  const auto groups = tie_groups(order, durations);

  // log sum_{j : T_j >= t} exp(g_j) per tie group
  std::vector<double> risk_lse(groups.size());
  double acc = kNegInf;
  for (std::size_t g = groups.size(); g-- > 0;) {
    for (std::size_t k = groups[g].first; k < groups[g].second; ++k) acc = log_add_exp(acc, scores[order[k]]);
    risk_lse[g] = acc;
  }

  double loss = 0.0;
  double cum = kNegInf;  // log sum_{i : E_i = 1, T_i <= t} exp(-risk_lse(i))
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t k = groups[g].first; k < groups[g].second; ++k) {
      const Eigen::Index i = order[k];
      if (events[i] == 1) {
        loss += risk_lse[g] - scores[i];
        cum = log_add_exp(cum, -risk_lse[g]);
      }
    }
    for (std::size_t k = groups[g].first; k < groups[g].second; ++k) {
      const Eigen::Index i = order[k];
      const double share = cum == kNegInf ? 0.0 : std::exp(scores[i] + cum);
      out.grad(i, 0) = share - events[i];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.loss = loss * inv_n;
  out.grad *= inv_n;
  return out;
}

std::vector<CaseControls> sample_controls(const Eigen::VectorXd& durations, const Eigen::VectorXi& events,
                                          int controls_per_case, Rng& rng) {
  if (controls_per_case < 1) throw std::invalid_argument("controls_per_case must be at least 1");
  const Eigen::Index n = durations.size();
  check_labels(n, durations, events);
  const auto order = ascending_order(durations);
  const auto groups = tie_groups(order, durations);
  std::vector<std::size_t> position(order.size());
  std::vector<std::size_t> group_start(order.size());
  for (const auto& [b, e] : groups)
    for (std::size_t k = b; k < e; ++k) {
      position[static_cast<std::size_t>(order[k])] = k;
      group_start[static_cast<std::size_t>(order[k])] = b;
    }

  std::vector<CaseControls> pairs;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (events[i] != 1) continue;
    CaseControls cc;
    cc.case_index = i;
    const std::size_t start = group_start[static_cast<std::size_t>(i)];
    const std::size_t self = position[static_cast<std::size_t>(i)];
    const std::size_t candidates = order.size() - start - 1;
    if (candidates > 0) {
      std::uniform_int_distribution<std::size_t> pick(0, candidates - 1);
      for (int c = 0; c < controls_per_case; ++c) {
        std::size_t k = start + pick(rng);
        if (k >= self) ++k;
        cc.controls.push_back(order[k]);
      }
    }
    pairs.push_back(std::move(cc));
  }
  return pairs;
}

std::vector<CaseControls> full_risk_set_controls(const Eigen::VectorXd& durations, const Eigen::VectorXi& events) {
  const Eigen::Index n = durations.size();
  check_labels(n, durations, events);
  std::vector<CaseControls> pairs;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (events[i] != 1) continue;
    CaseControls cc;
    cc.case_index = i;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i && durations[j] >= durations[i]) cc.controls.push_back(j);
    pairs.push_back(std::move(cc));
  }
  return pairs;
}

LossResult case_control_loss(const Eigen::VectorXd& block_scores, const std::vector<Eigen::Index>& block_sizes,
                             Eigen::Index sample_count) {
  if (sample_count < 1) throw std::invalid_argument("case_control_loss: sample count must be positive");
  const Eigen::Index total = std::accumulate(block_sizes.begin(), block_sizes.end(), Eigen::Index{0});
  if (total != block_scores.size()) throw std::invalid_argument("case_control_loss: block sizes do not cover scores");

  LossResult out;
  out.grad = Eigen::MatrixXd::Zero(block_scores.size(), 1);
  const double inv_n = 1.0 / static_cast<double>(sample_count);
  double loss = 0.0;
  Eigen::Index off = 0;
  for (Eigen::Index size : block_sizes) {
    if (size < 1) throw std::invalid_argument("case_control_loss: empty block");
    const double s_case = block_scores[off];
    double m = 0.0;
    for (Eigen::Index c = 1; c < size; ++c) m = std::max(m, block_scores[off + c] - s_case);
    double total_exp = std::exp(-m);
    for (Eigen::Index c = 1; c < size; ++c) total_exp += std::exp(block_scores[off + c] - s_case - m);
    const double lse = m + std::log(total_exp);
    loss += lse;
    double control_mass = 0.0;
    for (Eigen::Index c = 1; c < size; ++c) {
      const double p = std::exp(block_scores[off + c] - s_case - lse);
      out.grad(off + c, 0) += p * inv_n;
      control_mass += p;
    }
    out.grad(off, 0) -= control_mass * inv_n;
    off += size;
  }
  out.loss = loss * inv_n;
  return out;
}

LossResult coxcc_loss(const Eigen::VectorXd& scores, const std::vector<CaseControls>& pairs) {
  const Eigen::Index n = scores.size();
  std::vector<Eigen::Index> sizes;
  std::vector<Eigen::Index> source;
  for (const auto& cc : pairs) {
    sizes.push_back(1 + static_cast<Eigen::Index>(cc.controls.size()));
    source.push_back(cc.case_index);
    source.insert(source.end(), cc.controls.begin(), cc.controls.end());
  }
  LossResult out;
  out.grad = Eigen::MatrixXd::Zero(n, 1);
  if (pairs.empty() || n == 0) return out;
  Eigen::VectorXd block(static_cast<Eigen::Index>(source.size()));
  for (std::size_t k = 0; k < source.size(); ++k) {
    if (source[k] < 0 || source[k] >= n) throw std::out_of_range("coxcc_loss: control index out of range");
    block[static_cast<Eigen::Index>(k)] = scores[source[k]];
  }
  const LossResult blockwise = case_control_loss(block, sizes, n);
  out.loss = blockwise.loss;
  for (std::size_t k = 0; k < source.size(); ++k) out.grad(source[k], 0) += blockwise.grad(static_cast<Eigen::Index>(k), 0);
  return out;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

LossResult deephit_loss(const Eigen::MatrixXd& pmf, const Eigen::VectorXi& bins, const Eigen::VectorXd& durations,
                        const Eigen::VectorXi& events, DeepHitWeights weights) {
  const Eigen::Index n = pmf.rows();
  const Eigen::Index nbins = pmf.cols();
  check_labels(n, durations, events);
  if (bins.size() != n) throw std::invalid_argument("deephit_loss: one bin index per sample required");
  if (weights.alpha < 0.0 || weights.alpha > 1.0) throw std::invalid_argument("deephit_loss: alpha must lie in [0, 1]");
  if (!(weights.sigma_rank > 0.0)) throw std::invalid_argument("deephit_loss: sigma_rank must be positive");
  for (Eigen::Index i = 0; i < n; ++i)
    if (bins[i] < 0 || bins[i] >= nbins) throw std::out_of_range("deephit_loss: bin index out of range");

  LossResult out;
  out.grad = Eigen::MatrixXd::Zero(n, nbins);
  if (n == 0) return out;
  Eigen::MatrixXd dpmf = Eigen::MatrixXd::Zero(n, nbins);

  // likelihood
  double nll = 0.0;
  const double nll_scale = weights.alpha / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index b = bins[i];
    if (events[i] == 1) {
      const double p = pmf(i, b);
      if (p > kProbabilityFloor) {
        nll -= std::log(p);
        dpmf(i, b) -= nll_scale / p;
      } else {
        nll -= std::log(kProbabilityFloor);
      }
    } else {
      const double tail = pmf.row(i).tail(nbins - b - 1).sum();
      if (tail > kProbabilityFloor) {
        nll -= std::log(tail);
        for (Eigen::Index k = b + 1; k < nbins; ++k) dpmf(i, k) -= nll_scale / tail;
      } else {
        nll -= std::log(kProbabilityFloor);
      }
    }
  }

  // ranking over comparable pairs (T_i < T_j, E_i = 1), using the CIF at bin(T_i)
  Eigen::MatrixXd cif(n, nbins);
  for (Eigen::Index i = 0; i < n; ++i) {
    double c = 0.0;
    for (Eigen::Index k = 0; k < nbins; ++k) cif(i, k) = (c += pmf(i, k));
  }
  double rank_sum = 0.0;
  long pairs = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (events[i] == 1)
      for (Eigen::Index j = 0; j < n; ++j)
        if (durations[i] < durations[j]) ++pairs;
  if (pairs > 0) {
    const double rank_scale = (1.0 - weights.alpha) / static_cast<double>(pairs);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (events[i] != 1) continue;
      const Eigen::Index b = bins[i];
      for (Eigen::Index j = 0; j < n; ++j) {
        if (!(durations[i] < durations[j])) continue;
        const double term = std::exp(-(cif(i, b) - cif(j, b)) / weights.sigma_rank);
        rank_sum += term;
        const double d = rank_scale * term / weights.sigma_rank;
        dpmf.row(i).head(b + 1).array() -= d;
        dpmf.row(j).head(b + 1).array() += d;
      }
    }
    out.loss = weights.alpha * nll / static_cast<double>(n) + (1.0 - weights.alpha) * rank_sum / static_cast<double>(pairs);
  } else {
    out.loss = weights.alpha * nll / static_cast<double>(n);
  }

  // chain through the softmax
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = pmf.row(i).dot(dpmf.row(i));
    out.grad.row(i) = pmf.row(i).array() * (dpmf.row(i).array() - mean);
  }
  return out;
}

StepFunction breslow_baseline(const Eigen::VectorXd& scores, const Eigen::VectorXd& durations,
                              const Eigen::VectorXi& events) {
  const Eigen::Index n = scores.size();
  check_labels(n, durations, events);
  if (events.sum() == 0) throw std::invalid_argument("breslow_baseline: no events, baseline hazard undefined");
  const auto order = ascending_order(durations);
  const auto groups = tie_groups(order, durations);
  std::vector<double> risk(groups.size());
  double acc = 0.0;
  for (std::size_t g = groups.size(); g-- > 0;) {
    for (std::size_t k = groups[g].first; k < groups[g].second; ++k) acc += std::exp(scores[order[k]]);
    risk[g] = acc;
  }
  std::vector<double> times;
  std::vector<double> cumulative;
  double h = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    int deaths = 0;
    for (std::size_t k = groups[g].first; k < groups[g].second; ++k) deaths += events[order[k]];
    if (deaths == 0) continue;
    h += deaths / risk[g];
    times.push_back(durations[order[groups[g].first]]);
    cumulative.push_back(h);
  }
  return StepFunction(std::move(times), std::move(cumulative), 0.0);
}

SurvivalCurves cox_survival(const StepFunction& baseline, const Eigen::VectorXd& scores) {
  SurvivalCurves out;
  out.times = baseline.times();
  const auto& h = baseline.values();
  out.survival.resize(static_cast<Eigen::Index>(h.size()), scores.size());
  const Eigen::VectorXd relative = scores.array().exp();
  for (std::size_t k = 0; k < h.size(); ++k)
    out.survival.row(static_cast<Eigen::Index>(k)) = (-h[k] * relative.array()).exp().transpose();
  return out;
}

SurvivalCurves pmf_survival(const Eigen::MatrixXd& pmf, const std::vector<double>& bin_starts) {
  if (static_cast<Eigen::Index>(bin_starts.size()) != pmf.cols())
    throw std::invalid_argument("pmf_survival: one start time per bin required");
  SurvivalCurves out;
  out.times = bin_starts;
  out.survival.resize(pmf.cols(), pmf.rows());
  for (Eigen::Index j = 0; j < pmf.rows(); ++j) {
    double cif = 0.0;
    for (Eigen::Index k = 0; k < pmf.cols(); ++k) {
      cif += pmf(j, k);
      out.survival(k, j) = std::clamp(1.0 - cif, 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace dpsurv
