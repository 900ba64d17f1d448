#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "certifair/autodiff.hpp"

namespace certifair {

/// Dense affine layer, weights stored row-major (fan_out rows x fan_in columns).
template <class T>
struct DenseLayer {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  std::vector<T> weights;
  std::vector<T> bias;

  const T& weight(std::size_t row, std::size_t col) const { return weights[row * fan_in + col]; }
  T& weight(std::size_t row, std::size_t col) { return weights[row * fan_in + col]; }
};

/// Feed-forward binary classifier: ReLU hidden layers, logistic output.
///
/// The last layer has a single output whose pre-sigmoid value is the logit.
/// Parameters are laid out for gradients and optimizers in layer order, each
/// layer contributing its row-major weights followed by its bias.
class MLPNetwork {
 public:
  MLPNetwork() = default;
  /// Validates shapes, chaining, the single-output head and finiteness.
  MLPNetwork(std::size_t input_dim, std::vector<DenseLayer<double>> layers);

  /// Xavier-uniform weights, zero biases.  `layer_dims` = {input, hidden..., 1}.
  static MLPNetwork init(std::span<const std::size_t> layer_dims, std::uint64_t seed);

  std::size_t input_dim() const { return input_dim_; }
  const std::vector<DenseLayer<double>>& layers() const { return layers_; }
  std::size_t hidden_neuron_count() const;
  std::vector<std::size_t> layer_dims() const;

  std::size_t parameter_count() const;
  std::vector<double> parameters() const;
  /// Replaces all parameters (same layout as `parameters()`).
  void set_parameters(std::span<const double> flat);

  friend bool operator==(const MLPNetwork& a, const MLPNetwork& b);

 private:
  std::size_t input_dim_ = 0;
  std::vector<DenseLayer<double>> layers_;
};

/// Copies the parameters onto `tape` as independent variables, in the
/// canonical layout.  Returns the layers and the tape index of the first one.
std::pair<std::vector<DenseLayer<ad::Var>>, int> lift_parameters(const MLPNetwork& net,
                                                                 ad::Tape& tape);

/// Gradient of `output` with respect to lifted parameters, canonical layout.
std::vector<double> parameter_gradient(const ad::Tape& tape, const ad::Var& output,
                                       int first_index, std::size_t count);

struct ForwardResult {
  double logit = 0.0;
  double prob = 0.5;
};

ForwardResult forward(const MLPNetwork& net, std::span<const double> x);

/// 1 iff logit >= 0; a probability of exactly 0.5 classifies as 1.
int predict(const MLPNetwork& net, std::span<const double> x);

inline constexpr double kProbClip = 1e-7;

/// Binary cross-entropy with the probability clamped to [1e-7, 1 - 1e-7].
double bce_loss(double prob, int label);

/// Generic clamped BCE used by the bound-based losses.
template <class S>
S bce_from_prob(const S& prob, int label) {
  using std::log;
  const S p = clamp_to(prob, kProbClip, 1.0 - kProbClip);
  return label == 1 ? -log(p) : -log(S(1.0) - p);
}

struct LabeledPoint {
  std::span<const double> x;
  int y = 0;
};

/// Mean BCE over the batch and its exact gradient (canonical layout).
struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};
LossAndGradient bce_gradients(const MLPNetwork& net, std::span<const LabeledPoint> batch);

/// Adam with bias correction.  Defaults: beta1 0.9, beta2 0.999, eps 1e-8.
struct AdamState {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;

  static AdamState for_network(const MLPNetwork& net, double learning_rate = 0.001);
};

void adam_step(AdamState& state, MLPNetwork& net, std::span<const double> gradient);

}  // namespace certifair
