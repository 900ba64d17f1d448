#pragma once

// Sound bound propagation over input boxes.
//
// Inputs are described by a box over some parameter vector z together with an
// affine map x = M z + c from z to the network input.  With the identity map
// this is the plain input box; the paired (x, e) parameterization used for
// product-network queries maps one shared z to the inputs of both copies.
//
// Every routine is a template over the scalar type S.  S = double evaluates,
// S = ad::Var additionally records subgradients with respect to the weights.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "certifair/autodiff.hpp"
#include "certifair/network.hpp"
#include "certifair/product.hpp"
#include "certifair/property.hpp"

namespace certifair {

struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t dim() const { return lo.size(); }
  bool contains(std::span<const double> z) const;
  static Box point(std::span<const double> z);
};

/// Network input = matrix * z + offset, matrix is rows x cols row-major.
struct AffineInput {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> matrix;
  std::vector<double> offset;

  static AffineInput identity(std::size_t n);
  double coeff(std::size_t r, std::size_t c) const { return matrix[r * cols + c]; }
  std::vector<double> apply(std::span<const double> z) const;
};

/// Branch-and-bound decision for one hidden ReLU.
enum class ReluPhase : std::int8_t { free, active, inactive };

/// Per hidden layer, per neuron.  Empty means "no decisions".
using ReluSplits = std::vector<std::vector<ReluPhase>>;

ReluSplits no_splits(const MLPNetwork& net);

template <class S>
struct ScalarInterval {
  S lo{};
  S hi{};
};

/// Concrete pre-activation intervals of every layer; the last layer is the logit.
template <class S>
struct IntervalBounds {
  std::vector<std::vector<ScalarInterval<S>>> pre;
  bool feasible = true;

  const ScalarInterval<S>& output() const { return pre.back().front(); }
};

template <class S>
struct AffineForm {
  std::vector<S> coeffs;
  S constant{};
};

template <class S>
struct NeuronBounds {
  AffineForm<S> lower;
  AffineForm<S> upper;
  ScalarInterval<S> concrete;
};

/// Symbolic pre-activation bounds of every neuron over the box variables.
template <class S>
struct LinearBounds {
  std::vector<std::vector<NeuronBounds<S>>> pre;
  bool feasible = true;

  const NeuronBounds<S>& output() const { return pre.back().front(); }
};

template <class S>
IntervalBounds<S> interval_bounds(std::span<const DenseLayer<S>> layers, const AffineInput& input,
                                  const Box& box, const ReluSplits* splits = nullptr);

/// Forward symbolic propagation with the triangle relaxation for unstable
/// ReLUs (upper chord u/(u-l) (y - l); lower line y when u >= |l|, else 0).
/// Concrete intervals are intersected with interval arithmetic layer by layer.
template <class S>
LinearBounds<S> symbolic_bounds(std::span<const DenseLayer<S>> layers, const AffineInput& input,
                                const Box& box, const ReluSplits* splits = nullptr);

template <class S>
S form_min(const AffineForm<S>& f, const Box& box);
template <class S>
S form_max(const AffineForm<S>& f, const Box& box);

// Convenience overloads on whole networks.
IntervalBounds<double> interval_bounds(const MLPNetwork& net, const Box& box);
LinearBounds<double> symbolic_bounds(const MLPNetwork& net, const Box& box);
/// Product network over a 2n-dimensional box on (x, x').
std::array<IntervalBounds<double>, 2> interval_bounds(const ProductNetwork& pnet, const Box& box);
std::array<LinearBounds<double>, 2> symbolic_bounds(const ProductNetwork& pnet, const Box& box);

/// Paired parameterization z = (x_num, e_num); the second individual takes
/// x_num + e_num.  Categoricals follow the partition; the sensitive block is
/// set to `first_level` / `second_level`.
struct PairedEncoding {
  Box box;
  AffineInput first;
  AffineInput second;
  std::size_t numerical_count = 0;
};

PairedEncoding encode_partition(const FairnessProperty& prop, const DatasetSchema& schema,
                                const Partition& partition, std::size_t first_level, std::size_t second_level);

/// S_phi(x) as a box over the full input: numericals x +- delta intersected
/// with the domain, non-sensitive categoricals pinned, sensitive coordinates
/// relaxed to [0, 1] unless `pin_sensitive`.
Box neighborhood_box(std::span<const double> x, const FairnessProperty& prop, const DatasetSchema& schema,
                     bool pin_sensitive);

/// Whole property domain: numericals over their intervals, categoricals [0, 1].
Box domain_box(const FairnessProperty& prop, const DatasetSchema& schema);

enum class BoundMode { interval, symbolic };

template <class S>
ScalarInterval<S> logit_bounds(std::span<const DenseLayer<S>> layers, const Box& box, BoundMode mode);

/// Upper bound on the worst-case BCE over S_phi(x): the clamped
/// -log(1 - sigma(U)) for y = 0, -log(sigma(L)) for y = 1.
template <class S>
S local_fairness_upper(std::span<const DenseLayer<S>> layers, std::span<const double> x, int y,
                       const FairnessProperty& prop, const DatasetSchema& schema, BoundMode mode,
                       bool pin_sensitive = false);

/// Upper bound on max |f(x) - f(x')| in probability space.  With a partition
/// the pair ranges over the coupled (x, e) box; with nullptr over the
/// uncoupled D x D.
template <class S>
S global_fairness_upper(std::span<const DenseLayer<S>> layers, const FairnessProperty& prop,
                        const DatasetSchema& schema, const Partition* partition, BoundMode mode);

/// Upper bound on max |logit(x) - logit(x')| (same domains as above).
template <class S>
S global_logit_gap_upper(std::span<const DenseLayer<S>> layers, const FairnessProperty& prop,
                         const DatasetSchema& schema, const Partition* partition, BoundMode mode);

double local_fairness_upper(const MLPNetwork& net, std::span<const double> x, int y,
                            const FairnessProperty& prop, const DatasetSchema& schema,
                            BoundMode mode = BoundMode::symbolic, bool pin_sensitive = false);
double global_fairness_upper(const MLPNetwork& net, const FairnessProperty& prop, const DatasetSchema& schema,
                             const Partition* partition, BoundMode mode = BoundMode::symbolic);

}  // namespace certifair
