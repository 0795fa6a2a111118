#pragma once

#include "dpsurv/rng.hpp"
#include "dpsurv/step_function.hpp"

#include <Eigen/Dense>

#include <vector>

namespace dpsurv {

/// Floor applied inside every log of a predicted probability.
inline constexpr double kProbabilityFloor = 1e-7;

/// Loss value and its gradient with respect to the head input: one column of
/// scores for the Cox heads, per-bin logits for DeepHit.
struct LossResult {
  double loss = 0.0;
  Eigen::MatrixXd grad;
};

/// Negative Cox partial log-likelihood, averaged over the batch size.
/// Tied durations are all in each other's risk set.
LossResult coxph_loss(const Eigen::VectorXd& scores, const Eigen::VectorXd& durations,
                      const Eigen::VectorXi& events);

/// Control indices drawn for one event ("case") sample.
struct CaseControls {
  Eigen::Index case_index = 0;
  std::vector<Eigen::Index> controls;
};

/// For every event sample, `controls_per_case` draws with replacement from its
/// risk set minus itself. Events whose reduced risk set is empty get no controls.
std::vector<CaseControls> sample_controls(const Eigen::VectorXd& durations, const Eigen::VectorXi& events,
                                          int controls_per_case, Rng& rng);

/// Every event sample paired with its whole reduced risk set.
std::vector<CaseControls> full_risk_set_controls(const Eigen::VectorXd& durations, const Eigen::VectorXi& events);

/// Case-control loss over blocks of scores laid out as
/// [case, control_1, ..., control_m] per block:
///   (1/n) sum_blocks log(1 + sum_c exp(s_c - s_case)).
/// Gradient is with respect to the block scores.
LossResult case_control_loss(const Eigen::VectorXd& block_scores, const std::vector<Eigen::Index>& block_sizes,
                             Eigen::Index sample_count);

/// CoxCC loss on per-sample scores using a fixed control sample.
LossResult coxcc_loss(const Eigen::VectorXd& scores, const std::vector<CaseControls>& pairs);

/// Row-wise softmax.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

struct DeepHitWeights {
  double alpha = 0.2;
  double sigma_rank = 0.1;
};

/// alpha * NLL + (1 - alpha) * ranking loss over a per-sample pmf across time
/// bins. Gradient is with respect to the softmax logits that produced `pmf`.
LossResult deephit_loss(const Eigen::MatrixXd& pmf, const Eigen::VectorXi& bins, const Eigen::VectorXd& durations,
                        const Eigen::VectorXi& events, DeepHitWeights weights = {});

/// Breslow estimate of the cumulative baseline hazard, jumping at the distinct
/// event times.
StepFunction breslow_baseline(const Eigen::VectorXd& scores, const Eigen::VectorXd& durations,
                              const Eigen::VectorXi& events);

/// S(t|x) = exp(-H0(t) exp(g(x))) evaluated at every baseline jump.
SurvivalCurves cox_survival(const StepFunction& baseline, const Eigen::VectorXd& scores);

/// Survival implied by a pmf over bins starting at `bin_starts`: within bin k
/// the survival is 1 minus the mass of bins 0..k.
SurvivalCurves pmf_survival(const Eigen::MatrixXd& pmf, const std::vector<double>& bin_starts);

}  // namespace dpsurv
