#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <stdexcept>
#include <type_traits>
#include <string>
#include <vector>

namespace dpsurv {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Flat view of every weight and bias of a network, layer-major, each layer
/// storing its (out x in) weight matrix column-major followed by its bias.
using ParameterVector = Eigen::VectorXd;

/// Lets Eigen expressions bind to the data arguments; the scalar type is
/// deduced from the parameter vector alone.
template <typename T>
using NonDeduced = std::type_identity_t<T>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fully connected network shape. Hidden layers use ReLU, the output layer is
/// linear.
class MlpSpec {
 public:
  MlpSpec() = default;
  explicit MlpSpec(std::vector<Eigen::Index> layer_sizes) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw ShapeError("MlpSpec needs at least an input and an output layer");
    for (auto s : sizes_)
      if (s < 1) throw ShapeError("MlpSpec layer sizes must be positive");
  }

  /// The usual [input, 32, 32, output] survival network.
  static MlpSpec survival_default(Eigen::Index input, Eigen::Index output) {
    return MlpSpec({input, 32, 32, output});
  }

  const std::vector<Eigen::Index>& layer_sizes() const { return sizes_; }
  Eigen::Index input_dim() const { return sizes_.front(); }
  Eigen::Index output_dim() const { return sizes_.back(); }
  Eigen::Index layer_count() const { return static_cast<Eigen::Index>(sizes_.size()) - 1; }
  Eigen::Index fan_in(Eigen::Index layer) const { return sizes_[layer]; }
  Eigen::Index fan_out(Eigen::Index layer) const { return sizes_[layer + 1]; }

  Eigen::Index weight_offset(Eigen::Index layer) const {
    Eigen::Index off = 0;
    for (Eigen::Index l = 0; l < layer; ++l) off += fan_in(l) * fan_out(l) + fan_out(l);
    return off;
  }
  Eigen::Index bias_offset(Eigen::Index layer) const {
    return weight_offset(layer) + fan_in(layer) * fan_out(layer);
  }
  Eigen::Index parameter_count() const { return weight_offset(layer_count()); }

  bool operator==(const MlpSpec&) const = default;

 private:
  std::vector<Eigen::Index> sizes_;
};

namespace detail {

inline void check_parameters(const MlpSpec& spec, Eigen::Index length) {
  if (length != spec.parameter_count())
    throw ShapeError("parameter vector has " + std::to_string(length) + " entries, network expects " +
                     std::to_string(spec.parameter_count()));
}

inline void check_batch(const MlpSpec& spec, Eigen::Index cols) {
  if (cols != spec.input_dim())
    throw ShapeError("layer 0 expects " + std::to_string(spec.input_dim()) + " inputs, batch has " +
                     std::to_string(cols) + " columns");
}

}  // namespace detail

template <typename Scalar>
auto layer_weights(const MlpSpec& spec, const Vector<Scalar>& params, Eigen::Index layer) {
  return Eigen::Map<const Matrix<Scalar>>(params.data() + spec.weight_offset(layer), spec.fan_out(layer),
                                          spec.fan_in(layer));
}

template <typename Scalar>
auto layer_bias(const MlpSpec& spec, const Vector<Scalar>& params, Eigen::Index layer) {
  return Eigen::Map<const Vector<Scalar>>(params.data() + spec.bias_offset(layer), spec.fan_out(layer));
}

/// Unpacks the flat vector into per-layer weight matrices and biases.
template <typename Scalar>
struct LayerParameters {
  std::vector<Matrix<Scalar>> weights;
  std::vector<Vector<Scalar>> biases;
};

template <typename Scalar>
LayerParameters<Scalar> unflatten(const MlpSpec& spec, const Vector<Scalar>& params) {
  detail::check_parameters(spec, params.size());
  LayerParameters<Scalar> out;
  for (Eigen::Index l = 0; l < spec.layer_count(); ++l) {
    out.weights.emplace_back(layer_weights(spec, params, l));
    out.biases.emplace_back(layer_bias(spec, params, l));
  }
  return out;
}

template <typename Scalar>
Vector<Scalar> flatten(const MlpSpec& spec, const LayerParameters<Scalar>& layers) {
  if (static_cast<Eigen::Index>(layers.weights.size()) != spec.layer_count() ||
      layers.biases.size() != layers.weights.size())
    throw ShapeError("layer count does not match network spec");
  Vector<Scalar> params(spec.parameter_count());
  for (Eigen::Index l = 0; l < spec.layer_count(); ++l) {
    const auto& w = layers.weights[l];
    const auto& b = layers.biases[l];
    if (w.rows() != spec.fan_out(l) || w.cols() != spec.fan_in(l) || b.size() != spec.fan_out(l))
      throw ShapeError("layer " + std::to_string(l) + " has the wrong shape");
    Eigen::Map<Matrix<Scalar>>(params.data() + spec.weight_offset(l), w.rows(), w.cols()) = w;
    params.segment(spec.bias_offset(l), b.size()) = b;
  }
  return params;
}

/// Evaluates the network on every row of `batch`.
template <typename Scalar>
Matrix<Scalar> forward(const MlpSpec& spec, const Vector<Scalar>& params, const Matrix<NonDeduced<Scalar>>& batch) {
  detail::check_parameters(spec, params.size());
  detail::check_batch(spec, batch.cols());
  Matrix<Scalar> act = batch;
  const Eigen::Index layers = spec.layer_count();
  for (Eigen::Index l = 0; l < layers; ++l) {
    Matrix<Scalar> z = act * layer_weights(spec, params, l).transpose();
    z.rowwise() += layer_bias(spec, params, l).transpose();
    if (l + 1 < layers)
      act = z.cwiseMax(Scalar(0));
    else
      act = std::move(z);
  }
  return act;
}

/// Gradient of a loss with respect to the flat parameters, given the loss
/// gradient with respect to every network output.
template <typename Scalar>
Vector<Scalar> backward(const MlpSpec& spec, const Vector<Scalar>& params, const Matrix<NonDeduced<Scalar>>& batch,
                        const Matrix<NonDeduced<Scalar>>& upstream) {
  detail::check_parameters(spec, params.size());
  detail::check_batch(spec, batch.cols());
  if (upstream.rows() != batch.rows() || upstream.cols() != spec.output_dim())
    throw ShapeError("upstream gradient is " + std::to_string(upstream.rows()) + "x" +
                     std::to_string(upstream.cols()) + ", network output is " + std::to_string(batch.rows()) +
                     "x" + std::to_string(spec.output_dim()));

  const Eigen::Index layers = spec.layer_count();
  std::vector<Matrix<Scalar>> inputs(layers);
  std::vector<Matrix<Scalar>> pre(layers);
  inputs[0] = batch;
  for (Eigen::Index l = 0; l < layers; ++l) {
    pre[l] = inputs[l] * layer_weights(spec, params, l).transpose();
    pre[l].rowwise() += layer_bias(spec, params, l).transpose();
    if (l + 1 < layers) inputs[l + 1] = pre[l].cwiseMax(Scalar(0));
  }

  Vector<Scalar> grad = Vector<Scalar>::Zero(params.size());
  Matrix<Scalar> delta = upstream;
  for (Eigen::Index l = layers - 1; l >= 0; --l) {
    if (l + 1 < layers) delta = delta.cwiseProduct((pre[l].array() > Scalar(0)).template cast<Scalar>().matrix());
    Eigen::Map<Matrix<Scalar>>(grad.data() + spec.weight_offset(l), spec.fan_out(l), spec.fan_in(l)) =
        delta.transpose() * inputs[l];
    grad.segment(spec.bias_offset(l), spec.fan_out(l)) = delta.colwise().sum().transpose();
    if (l > 0) delta = delta * layer_weights(spec, params, l);
  }
  return grad;
}

/// Glorot-uniform weights, zero biases.
template <typename Scalar = double, typename Generator>
Vector<Scalar> glorot_uniform(const MlpSpec& spec, Generator& gen) {
  Vector<Scalar> params = Vector<Scalar>::Zero(spec.parameter_count());
  for (Eigen::Index l = 0; l < spec.layer_count(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(spec.fan_in(l) + spec.fan_out(l)));
    std::uniform_real_distribution<double> dist(-limit, limit);
    const Eigen::Index off = spec.weight_offset(l);
    for (Eigen::Index i = 0; i < spec.fan_in(l) * spec.fan_out(l); ++i) params[off + i] = Scalar(dist(gen));
  }
  return params;
}

template <typename Scalar>
struct AdamState {
  Vector<Scalar> first_moment;
  Vector<Scalar> second_moment;
  long step = 0;
  Scalar learning_rate = Scalar(1e-4);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);

  static AdamState fresh(Eigen::Index size, Scalar learning_rate) {
    AdamState s;
    s.first_moment = Vector<Scalar>::Zero(size);
    s.second_moment = Vector<Scalar>::Zero(size);
    s.learning_rate = learning_rate;
    return s;
  }
};

/// One bias-corrected Adam update, in place.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, Vector<Scalar>& params, const Vector<NonDeduced<Scalar>>& grad) {
  if (params.size() != grad.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size())
    throw ShapeError("adam_step: state, parameters and gradient differ in length");
  ++state.step;
  state.first_moment = state.beta1 * state.first_moment + (Scalar(1) - state.beta1) * grad;
  state.second_moment = state.beta2 * state.second_moment + (Scalar(1) - state.beta2) * grad.cwiseAbs2();
  const Scalar c1 = Scalar(1) - std::pow(state.beta1, Scalar(state.step));
  const Scalar c2 = Scalar(1) - std::pow(state.beta2, Scalar(state.step));
  params.array() -= state.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

template <typename Scalar>
void sgd_step(NonDeduced<Scalar> learning_rate, Vector<Scalar>& params, const Vector<NonDeduced<Scalar>>& grad) {
  if (params.size() != grad.size()) throw ShapeError("sgd_step: parameters and gradient differ in length");
  params -= learning_rate * grad;
}

/// Central differences, one coordinate at a time.
template <typename Scalar, typename Loss>
Vector<Scalar> finite_difference_gradient(Loss&& loss, const Vector<Scalar>& params, Scalar step) {
  if (!(step > Scalar(0))) throw std::invalid_argument("finite_difference_gradient: step must be positive");
  Vector<Scalar> grad(params.size());
  Vector<Scalar> probe = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    probe[i] = params[i] + step;
    const Scalar up = loss(probe);
    probe[i] = params[i] - step;
    const Scalar down = loss(probe);
    probe[i] = params[i];
    grad[i] = (up - down) / (Scalar(2) * step);
  }
  return grad;
}

}  // namespace dpsurv
