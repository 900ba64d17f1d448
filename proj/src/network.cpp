#include "certifair/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "certifair/errors.hpp"

namespace certifair {

MLPNetwork::MLPNetwork(std::size_t input_dim, std::vector<DenseLayer<double>> layers)
    : input_dim_(input_dim), layers_(std::move(layers)) {
  if (input_dim_ == 0) throw ConfigError("network input_dim must be positive");
  if (layers_.empty()) throw ConfigError("network needs at least one layer");
  std::size_t expected_in = input_dim_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& layer = layers_[i];
    if (layer.fan_in != expected_in) {
      throw ConfigError("layer " + std::to_string(i) + " fan_in " + std::to_string(layer.fan_in) +
                        " does not match previous width " + std::to_string(expected_in));
    }
    if (layer.fan_out == 0) throw ConfigError("layer " + std::to_string(i) + " has zero width");
    if (layer.weights.size() != layer.fan_in * layer.fan_out || layer.bias.size() != layer.fan_out) {
      throw ConfigError("layer " + std::to_string(i) + " storage does not match its shape");
    }
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(layer.weights.begin(), layer.weights.end(), finite) ||
        !std::all_of(layer.bias.begin(), layer.bias.end(), finite)) {
      throw ConfigError("layer " + std::to_string(i) + " has non-finite parameters");
    }
    expected_in = layer.fan_out;
  }
  if (layers_.back().fan_out != 1) throw ConfigError("final layer must have exactly one output");
}

MLPNetwork MLPNetwork::init(std::span<const std::size_t> layer_dims, std::uint64_t seed) {
  if (layer_dims.size() < 2) throw ConfigError("layer_dims needs at least input and output sizes");
  if (std::find(layer_dims.begin(), layer_dims.end(), std::size_t{0}) != layer_dims.end()) {
    throw ConfigError("layer_dims contains a zero-width layer");
  }
  if (layer_dims.back() != 1) throw ConfigError("last layer dim must be 1 (binary head)");

  std::mt19937_64 rng(seed);
  std::vector<DenseLayer<double>> layers;
  for (std::size_t i = 0; i + 1 < layer_dims.size(); ++i) {
    DenseLayer<double> layer;
    layer.fan_in = layer_dims[i];
    layer.fan_out = layer_dims[i + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.fan_in + layer.fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    layer.weights.resize(layer.fan_in * layer.fan_out);
    for (double& w : layer.weights) w = dist(rng);
    layer.bias.assign(layer.fan_out, 0.0);
    layers.push_back(std::move(layer));
  }
  return MLPNetwork(layer_dims.front(), std::move(layers));
}

std::size_t MLPNetwork::hidden_neuron_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) n += layers_[i].fan_out;
  return n;
}

std::vector<std::size_t> MLPNetwork::layer_dims() const {
  std::vector<std::size_t> dims{input_dim_};
  for (const auto& l : layers_) dims.push_back(l.fan_out);
  return dims;
}

std::size_t MLPNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

std::vector<double> MLPNetwork::parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& l : layers_) {
    flat.insert(flat.end(), l.weights.begin(), l.weights.end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

void MLPNetwork::set_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw InternalError("parameter vector size mismatch");
  std::size_t k = 0;
  for (auto& l : layers_) {
    for (double& w : l.weights) w = flat[k++];
    for (double& b : l.bias) b = flat[k++];
  }
}

bool operator==(const MLPNetwork& a, const MLPNetwork& b) {
  if (a.input_dim_ != b.input_dim_ || a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    const auto& la = a.layers_[i];
    const auto& lb = b.layers_[i];
    if (la.fan_in != lb.fan_in || la.fan_out != lb.fan_out || la.weights != lb.weights ||
        la.bias != lb.bias) {
      return false;
    }
  }
  return true;
}

std::pair<std::vector<DenseLayer<ad::Var>>, int> lift_parameters(const MLPNetwork& net,
                                                                 ad::Tape& tape) {
  std::vector<DenseLayer<ad::Var>> lifted;
  const int first = static_cast<int>(tape.size());
  for (const auto& l : net.layers()) {
    DenseLayer<ad::Var> v;
    v.fan_in = l.fan_in;
    v.fan_out = l.fan_out;
    v.weights.reserve(l.weights.size());
    for (double w : l.weights) v.weights.push_back(tape.variable(w));
    v.bias.reserve(l.bias.size());
    for (double b : l.bias) v.bias.push_back(tape.variable(b));
    lifted.push_back(std::move(v));
  }
  return {std::move(lifted), first};
}

std::vector<double> parameter_gradient(const ad::Tape& tape, const ad::Var& output,
                                       int first_index, std::size_t count) {
  const auto adj = tape.adjoints(output);
  std::vector<double> grad(count, 0.0);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t node = static_cast<std::size_t>(first_index) + i;
    if (node < adj.size()) grad[i] = adj[node];
  }
  return grad;
}

namespace {

void check_input(const MLPNetwork& net, std::span<const double> x) {
  if (x.size() != net.input_dim()) {
    throw InputError("input has " + std::to_string(x.size()) + " features, network expects " +
                     std::to_string(net.input_dim()));
  }
}

// Pre-activations of every layer (the last entry holds the logit).
std::vector<std::vector<double>> forward_trace(const MLPNetwork& net, std::span<const double> x) {
  std::vector<std::vector<double>> pre;
  pre.reserve(net.layers().size());
  std::vector<double> act(x.begin(), x.end());
  const auto& layers = net.layers();
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& l = layers[li];
    std::vector<double> z(l.fan_out);
    for (std::size_t r = 0; r < l.fan_out; ++r) {
      double s = l.bias[r];
      for (std::size_t c = 0; c < l.fan_in; ++c) s += l.weight(r, c) * act[c];
      z[r] = s;
    }
    pre.push_back(z);
    if (li + 1 < layers.size()) {
      for (double& v : z) v = relu(v);
      act = std::move(z);
    }
  }
  return pre;
}

}  // namespace

ForwardResult forward(const MLPNetwork& net, std::span<const double> x) {
  check_input(net, x);
  for (double v : x) {
    if (!std::isfinite(v)) throw InputError("input contains a non-finite value");
  }
  const auto pre = forward_trace(net, x);
  const double logit = pre.back()[0];
  return {logit, sigmoid(logit)};
}

int predict(const MLPNetwork& net, std::span<const double> x) {
  return forward(net, x).logit >= 0.0 ? 1 : 0;
}

double bce_loss(double prob, int label) { return bce_from_prob(prob, label); }

LossAndGradient bce_gradients(const MLPNetwork& net, std::span<const LabeledPoint> batch) {
  if (batch.empty()) throw InputError("gradient requested for an empty batch");
  const auto& layers = net.layers();
  LossAndGradient out;
  out.gradient.assign(net.parameter_count(), 0.0);

  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& l : layers) {
    offsets.push_back(off);
    off += l.weights.size() + l.bias.size();
  }

  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& sample : batch) {
    check_input(net, sample.x);
    const auto pre = forward_trace(net, sample.x);
    const double logit = pre.back()[0];
    const double p = sigmoid(logit);
    out.loss += bce_loss(p, sample.y) * scale;

    // dL/dlogit; zero where the probability clamp is active.
    double dlogit = p - static_cast<double>(sample.y);
    if (branch(p < kProbClip || p > 1.0 - kProbClip)) dlogit = 0.0;
    std::vector<double> delta{dlogit * scale};

    for (std::size_t li = layers.size(); li-- > 0;) {
      const auto& l = layers[li];
      std::vector<double> input_act;
      if (li == 0) {
        input_act.assign(sample.x.begin(), sample.x.end());
      } else {
        input_act = pre[li - 1];
        for (double& v : input_act) v = relu(v);
      }
      double* gw = out.gradient.data() + offsets[li];
      double* gb = gw + l.weights.size();
      for (std::size_t r = 0; r < l.fan_out; ++r) {
        gb[r] += delta[r];
        for (std::size_t c = 0; c < l.fan_in; ++c) gw[r * l.fan_in + c] += delta[r] * input_act[c];
      }
      if (li == 0) break;
      std::vector<double> next(l.fan_in, 0.0);
      for (std::size_t c = 0; c < l.fan_in; ++c) {
        if (!(pre[li - 1][c] > 0.0)) continue;
        double s = 0.0;
        for (std::size_t r = 0; r < l.fan_out; ++r) s += l.weight(r, c) * delta[r];
        next[c] = s;
      }
      delta = std::move(next);
    }
  }
  return out;
}

AdamState AdamState::for_network(const MLPNetwork& net, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.first_moment.assign(net.parameter_count(), 0.0);
  s.second_moment.assign(net.parameter_count(), 0.0);
  return s;
}

void adam_step(AdamState& state, MLPNetwork& net, std::span<const double> gradient) {
  const std::size_t n = net.parameter_count();
  if (gradient.size() != n || state.first_moment.size() != n || state.second_moment.size() != n) {
    throw InternalError("adam_step: optimizer state does not match the network shape");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  auto params = net.parameters();
  for (std::size_t i = 0; i < n; ++i) {
    const double g = gradient[i];
    state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
    state.second_moment[i] = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.first_moment[i] / c1;
    const double v_hat = state.second_moment[i] / c2;
    params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
  net.set_parameters(params);
}

}  // namespace certifair
