#include "dpsurv/survival_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dpsurv {

std::string_view model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::coxph: return "coxph";
    case ModelKind::coxcc: return "coxcc";
    case ModelKind::coxtime: return "coxtime";
    case ModelKind::deephit: return "deephit";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  for (auto k : {ModelKind::coxph, ModelKind::coxcc, ModelKind::coxtime, ModelKind::deephit})
    if (model_name(k) == name) return k;
  throw std::invalid_argument("unknown model '" + std::string(name) + "'");
}

Eigen::Index TimeBins::index_of(double t) const {
  if (edges.size() < 2) throw std::logic_error("TimeBins: no bins");
  const double width = edges[1] - edges[0];
  const auto k = static_cast<Eigen::Index>(std::floor(t / width));
  return std::clamp<Eigen::Index>(k, 0, bin_count() - 1);
}

TimeScaler TimeScaler::fit(const Eigen::VectorXd& durations) {
  TimeScaler s;
  if (durations.size() == 0) return s;
  s.mean = durations.mean();
  const double var = (durations.array() - s.mean).square().mean();
  s.scale = var > 0.0 ? std::sqrt(var) : 1.0;
  return s;
}

SurvivalModel SurvivalModel::make(ModelKind kind, Eigen::Index features, const Eigen::VectorXd& train_durations,
                                  const ModelOptions& options) {
  SurvivalModel m;
  m.kind = kind;
  m.controls_per_case = options.controls_per_case;
  m.deephit = options.deephit;
  Eigen::Index input = features;
  Eigen::Index output = 1;
  if (kind == ModelKind::coxtime) {
    m.time_scaler = TimeScaler::fit(train_durations);
    input += 1;
  }
  if (kind == ModelKind::deephit) {
    if (!(options.bin_width > 0.0)) throw std::invalid_argument("bin width must be positive");
    const double max_t = train_durations.size() ? train_durations.maxCoeff() : options.bin_width;
    const auto count = static_cast<Eigen::Index>(std::floor(max_t / options.bin_width)) + 1;
    for (Eigen::Index k = 0; k <= count; ++k) m.bins.edges.push_back(static_cast<double>(k) * options.bin_width);
    output = count;
  }
  std::vector<Eigen::Index> sizes{input};
  sizes.insert(sizes.end(), options.hidden.begin(), options.hidden.end());
  sizes.push_back(output);
  m.network = MlpSpec(sizes);
  return m;
}

Eigen::MatrixXd with_time_column(const Eigen::MatrixXd& x, const Eigen::VectorXd& scaled_times) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out.col(0) = scaled_times;
  out.rightCols(x.cols()) = x;
  return out;
}

namespace {

// CoxTime rows: every block [case, controls...] evaluated at the case time.
Eigen::MatrixXd coxtime_rows(const SurvivalModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& durations,
                             const std::vector<CaseControls>& pairs, std::vector<Eigen::Index>& block_sizes) {
  Eigen::Index total = 0;
  for (const auto& cc : pairs) total += 1 + static_cast<Eigen::Index>(cc.controls.size());
  Eigen::MatrixXd rows(total, x.cols() + 1);
  block_sizes.clear();
  Eigen::Index r = 0;
  for (const auto& cc : pairs) {
    const double tau = model.time_scaler(durations[cc.case_index]);
    rows(r, 0) = tau;
    rows.row(r++).tail(x.cols()) = x.row(cc.case_index);
    for (auto c : cc.controls) {
      rows(r, 0) = tau;
      rows.row(r++).tail(x.cols()) = x.row(c);
    }
    block_sizes.push_back(1 + static_cast<Eigen::Index>(cc.controls.size()));
  }
  return rows;
}

Eigen::VectorXi bin_indices(const SurvivalModel& model, const Eigen::VectorXd& durations) {
  Eigen::VectorXi bins(durations.size());
  for (Eigen::Index i = 0; i < durations.size(); ++i) bins[i] = static_cast<int>(model.bins.index_of(durations[i]));
  return bins;
}

}  // namespace

ParameterGradient evaluate_loss(const SurvivalModel& model, const ParameterVector& params, const Eigen::MatrixXd& x,
                                const Eigen::VectorXd& durations, const Eigen::VectorXi& events,
                                const std::vector<CaseControls>& pairs, bool with_gradient) {
  ParameterGradient out;
  switch (model.kind) {
    case ModelKind::coxph:
    case ModelKind::coxcc: {
      const Eigen::VectorXd scores = forward(model.network, params, x).col(0);
      const LossResult head =
          model.kind == ModelKind::coxph ? coxph_loss(scores, durations, events) : coxcc_loss(scores, pairs);
      out.loss = head.loss;
      if (with_gradient) out.grad = backward(model.network, params, x, head.grad);
      break;
    }
    case ModelKind::coxtime: {
      std::vector<Eigen::Index> sizes;
      const Eigen::MatrixXd rows = coxtime_rows(model, x, durations, pairs, sizes);
      if (rows.rows() == 0) {
        out.grad = ParameterVector::Zero(params.size());
        break;
      }
      const Eigen::VectorXd scores = forward(model.network, params, rows).col(0);
      const LossResult head = case_control_loss(scores, sizes, x.rows());
      out.loss = head.loss;
      if (with_gradient) out.grad = backward(model.network, params, rows, head.grad);
      break;
    }
    case ModelKind::deephit: {
      const Eigen::MatrixXd pmf = softmax_rows(forward(model.network, params, x));
      const LossResult head = deephit_loss(pmf, bin_indices(model, durations), durations, events, model.deephit);
      out.loss = head.loss;
      if (with_gradient) out.grad = backward(model.network, params, x, head.grad);
      break;
    }
  }
  if (with_gradient && out.grad.size() == 0) out.grad = ParameterVector::Zero(params.size());
  return out;
}

std::optional<ParameterGradient> batch_loss(const SurvivalModel& model, const ParameterVector& params,
                                            const Eigen::MatrixXd& x, const Eigen::VectorXd& durations,
                                            const Eigen::VectorXi& events, Rng& rng) {
  if (model.kind != ModelKind::deephit && events.sum() == 0) return std::nullopt;
  std::vector<CaseControls> pairs;
  if (model.kind == ModelKind::coxcc || model.kind == ModelKind::coxtime)
    pairs = sample_controls(durations, events, model.controls_per_case, rng);
  return evaluate_loss(model, params, x, durations, events, pairs);
}

FittedPredictor fit_predictor(const SurvivalModel& model, const ParameterVector& params, const Eigen::MatrixXd& x,
                              const Eigen::VectorXd& durations, const Eigen::VectorXi& events) {
  FittedPredictor fitted;
  switch (model.kind) {
    case ModelKind::coxph:
    case ModelKind::coxcc:
      fitted.baseline = breslow_baseline(forward(model.network, params, x).col(0), durations, events);
      break;
    case ModelKind::coxtime: {
      if (events.sum() == 0) throw std::invalid_argument("fit_predictor: no events, baseline hazard undefined");
      std::vector<Eigen::Index> order(static_cast<std::size_t>(durations.size()));
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
      std::stable_sort(order.begin(), order.end(),
                       [&](Eigen::Index a, Eigen::Index b) { return durations[a] < durations[b]; });
      for (std::size_t b = 0; b < order.size();) {
        std::size_t e = b + 1;
        while (e < order.size() && durations[order[e]] == durations[order[b]]) ++e;
        int deaths = 0;
        for (std::size_t k = b; k < e; ++k) deaths += events[order[k]];
        if (deaths > 0) {
          const double t = durations[order[b]];
          const auto at_risk = static_cast<Eigen::Index>(order.size() - b);
          Eigen::MatrixXd rows(at_risk, x.cols() + 1);
          rows.col(0).setConstant(model.time_scaler(t));
          for (Eigen::Index r = 0; r < at_risk; ++r) rows.row(r).tail(x.cols()) = x.row(order[b + static_cast<std::size_t>(r)]);
          const double risk = forward(model.network, params, rows).col(0).array().exp().sum();
          fitted.event_times.push_back(t);
          fitted.hazard_increments.push_back(deaths / risk);
        }
        b = e;
      }
      break;
    }
    case ModelKind::deephit:
      break;
  }
  return fitted;
}

SurvivalCurves predict_survival(const SurvivalModel& model, const ParameterVector& params,
                                const FittedPredictor& fitted, const Eigen::MatrixXd& x) {
  switch (model.kind) {
    case ModelKind::coxph:
    case ModelKind::coxcc:
      if (fitted.baseline.times().empty()) throw std::logic_error("predict_survival: baseline hazard not fitted");
      return cox_survival(fitted.baseline, forward(model.network, params, x).col(0));
    case ModelKind::coxtime: {
      if (fitted.event_times.empty()) throw std::logic_error("predict_survival: baseline hazard not fitted");
      SurvivalCurves out;
      out.times = fitted.event_times;
      const auto m = static_cast<Eigen::Index>(fitted.event_times.size());
      out.survival.resize(m, x.rows());
      Eigen::MatrixXd rows(x.rows(), x.cols() + 1);
      rows.rightCols(x.cols()) = x;
      Eigen::VectorXd cumulative = Eigen::VectorXd::Zero(x.rows());
      for (Eigen::Index k = 0; k < m; ++k) {
        rows.col(0).setConstant(model.time_scaler(fitted.event_times[static_cast<std::size_t>(k)]));
        cumulative.array() += fitted.hazard_increments[static_cast<std::size_t>(k)] *
                              forward(model.network, params, rows).col(0).array().exp();
        out.survival.row(k) = (-cumulative.array()).exp().transpose();
      }
      return out;
    }
    case ModelKind::deephit:
      return pmf_survival(softmax_rows(forward(model.network, params, x)), model.bins.starts());
  }
  throw std::logic_error("predict_survival: unknown model kind");
}

}  // namespace dpsurv
