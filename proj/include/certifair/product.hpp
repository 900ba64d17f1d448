#pragma once

#include <span>
#include <utility>

#include "certifair/network.hpp"

namespace certifair {

/// Side-by-side composition of a network with itself.  Layer i of the product
/// is the block-diagonal matrix diag(W_i, W_i) with bias (b_i; b_i); the
/// blocks are a logical view over the base network's storage, so the base
/// must outlive the product.
class ProductNetwork {
 public:
  explicit ProductNetwork(const MLPNetwork& base) : base_(&base) {}

  const MLPNetwork& base() const { return *base_; }
  std::size_t input_dim() const { return 2 * base_->input_dim(); }
  std::size_t layer_count() const { return base_->layers().size(); }

  /// Entry (row, col) of the block-diagonal weight of `layer`; zero off the blocks.
  double block_weight(std::size_t layer, std::size_t row, std::size_t col) const;
  double block_bias(std::size_t layer, std::size_t row) const;

  /// Dense copy of one product layer, for inspection and tests.
  DenseLayer<double> materialize_layer(std::size_t layer) const;

  /// Logits of both copies on the concatenated input (x, x').
  std::pair<double, double> logits(std::span<const double> paired_input) const;
  std::pair<double, double> logits(std::span<const double> x, std::span<const double> x_prime) const;

 private:
  const MLPNetwork* base_;
};

ProductNetwork build_product(const MLPNetwork& net);

enum class OutputSpace { logit, prob };

/// |f(x) - f(x')| in the requested space.
double product_diff(const ProductNetwork& pnet, std::span<const double> x, std::span<const double> x_prime,
                    OutputSpace space);

}  // namespace certifair
