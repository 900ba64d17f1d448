#include "certifair/product.hpp"

#include <algorithm>
#include <cmath>

#include "certifair/errors.hpp"

namespace certifair {

double ProductNetwork::block_weight(std::size_t layer, std::size_t row, std::size_t col) const {
  const auto& l = base_->layers().at(layer);
  const bool top_row = row < l.fan_out;
  const bool left_col = col < l.fan_in;
  if (top_row != left_col) return 0.0;
  return l.weight(top_row ? row : row - l.fan_out, left_col ? col : col - l.fan_in);
}

double ProductNetwork::block_bias(std::size_t layer, std::size_t row) const {
  const auto& l = base_->layers().at(layer);
  return l.bias[row < l.fan_out ? row : row - l.fan_out];
}

DenseLayer<double> ProductNetwork::materialize_layer(std::size_t layer) const {
  const auto& l = base_->layers().at(layer);
  DenseLayer<double> out;
  out.fan_in = 2 * l.fan_in;
  out.fan_out = 2 * l.fan_out;
  out.weights.resize(out.fan_in * out.fan_out);
  out.bias.resize(out.fan_out);
  for (std::size_t r = 0; r < out.fan_out; ++r) {
    out.bias[r] = block_bias(layer, r);
    for (std::size_t c = 0; c < out.fan_in; ++c) out.weight(r, c) = block_weight(layer, r, c);
  }
  return out;
}

std::pair<double, double> ProductNetwork::logits(std::span<const double> paired_input) const {
  if (paired_input.size() != input_dim()) {
    throw InputError("paired input has " + std::to_string(paired_input.size()) + " columns, expected " +
                     std::to_string(input_dim()));
  }
  const std::size_t n = base_->input_dim();
  return logits(paired_input.subspan(0, n), paired_input.subspan(n, n));
}

std::pair<double, double> ProductNetwork::logits(std::span<const double> x,
                                                 std::span<const double> x_prime) const {
  // The blocks never interact, so each half runs through the shared weights.
  return {forward(*base_, x).logit, forward(*base_, x_prime).logit};
}

ProductNetwork build_product(const MLPNetwork& net) { return ProductNetwork(net); }

double product_diff(const ProductNetwork& pnet, std::span<const double> x, std::span<const double> x_prime,
                    OutputSpace space) {
  if (x.size() != x_prime.size()) throw InputError("product_diff: x and x' differ in length");
  const auto [a, b] = pnet.logits(x, x_prime);
  if (space == OutputSpace::logit) return std::abs(a - b);
  // |a| written as max(a, 0) + max(-a, 0).
  const double d = sigmoid(a) - sigmoid(b);
  return std::max(d, 0.0) + std::max(-d, 0.0);
}

}  // namespace certifair
