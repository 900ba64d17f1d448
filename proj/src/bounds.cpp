#include "certifair/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "certifair/errors.hpp"

namespace certifair {

bool Box::contains(std::span<const double> z) const {
  if (z.size() != dim()) return false;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!(z[i] >= lo[i] && z[i] <= hi[i])) return false;
  }
  return true;
}

Box Box::point(std::span<const double> z) { return Box{{z.begin(), z.end()}, {z.begin(), z.end()}}; }

AffineInput AffineInput::identity(std::size_t n) {
  AffineInput a;
  a.rows = n;
  a.cols = n;
  a.matrix.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) a.matrix[i * n + i] = 1.0;
  a.offset.assign(n, 0.0);
  return a;
}

std::vector<double> AffineInput::apply(std::span<const double> z) const {
  std::vector<double> x(offset);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) x[r] += coeff(r, c) * z[c];
  }
  return x;
}

ReluSplits no_splits(const MLPNetwork& net) {
  ReluSplits s;
  const auto& ls = net.layers();
  for (std::size_t i = 0; i + 1 < ls.size(); ++i) s.emplace_back(ls[i].fan_out, ReluPhase::free);
  return s;
}

namespace {

template <class S>
void check_shapes(std::span<const DenseLayer<S>> layers, const AffineInput& input, const Box& box,
                  const ReluSplits* splits) {
  if (layers.empty()) throw InputError("bounds: empty network");
  if (box.lo.size() != box.hi.size()) throw InputError("bounds: box lower/upper lengths differ");
  if (input.cols != box.dim()) {
    throw InputError("bounds: box has " + std::to_string(box.dim()) + " dimensions, input map expects " +
                     std::to_string(input.cols));
  }
  if (input.rows != layers.front().fan_in) {
    throw InputError("bounds: input map produces " + std::to_string(input.rows) +
                     " features, network expects " + std::to_string(layers.front().fan_in));
  }
  for (std::size_t i = 0; i < box.dim(); ++i) {
    if (!(box.lo[i] <= box.hi[i]) || !std::isfinite(box.lo[i]) || !std::isfinite(box.hi[i])) {
      throw InputError("bounds: box coordinate " + std::to_string(i) + " is empty or non-finite");
    }
  }
  if (splits != nullptr && !splits->empty() && splits->size() + 1 != layers.size()) {
    throw InternalError("bounds: split table does not match the hidden layer count");
  }
}

ReluPhase phase_of(const ReluSplits* splits, std::size_t layer, std::size_t neuron) {
  if (splits == nullptr || splits->empty()) return ReluPhase::free;
  return (*splits)[layer][neuron];
}

// Concrete intervals of the network inputs.
std::vector<ScalarInterval<double>> input_intervals(const AffineInput& input, const Box& box) {
  std::vector<ScalarInterval<double>> out(input.rows);
  for (std::size_t r = 0; r < input.rows; ++r) {
    double lo = input.offset[r];
    double hi = input.offset[r];
    for (std::size_t c = 0; c < input.cols; ++c) {
      const double m = input.coeff(r, c);
      if (m > 0.0) {
        lo += m * box.lo[c];
        hi += m * box.hi[c];
      } else if (m < 0.0) {
        lo += m * box.hi[c];
        hi += m * box.lo[c];
      }
    }
    out[r] = {lo, hi};
  }
  return out;
}

// Affine image of post-activation intervals through one layer.
template <class S, class P>
std::vector<ScalarInterval<S>> affine_interval(const DenseLayer<S>& l, const std::vector<ScalarInterval<P>>& post) {
  std::vector<ScalarInterval<S>> out(l.fan_out);
  for (std::size_t r = 0; r < l.fan_out; ++r) {
    S lo = l.bias[r];
    S hi = l.bias[r];
    for (std::size_t c = 0; c < l.fan_in; ++c) {
      const S& w = l.weight(r, c);
      if (branch(value_of(w) >= 0.0)) {
        lo += w * post[c].lo;
        hi += w * post[c].hi;
      } else {
        lo += w * post[c].hi;
        hi += w * post[c].lo;
      }
    }
    out[r] = {lo, hi};
  }
  return out;
}

// Applies a split decision to a concrete pre-activation interval.  Returns
// false when the decision contradicts the interval.
template <class S>
bool apply_phase(ScalarInterval<S>& iv, ReluPhase phase) {
  if (phase == ReluPhase::active) {
    if (value_of(iv.hi) < 0.0) return false;
    if (value_of(iv.lo) < 0.0) iv.lo = S(0.0);
  } else if (phase == ReluPhase::inactive) {
    if (value_of(iv.lo) > 0.0) return false;
    if (value_of(iv.hi) > 0.0) iv.hi = S(0.0);
  }
  return true;
}

template <class S>
bool is_inactive(const ScalarInterval<S>& iv, ReluPhase phase) {
  return phase == ReluPhase::inactive || branch(value_of(iv.hi) <= 0.0);
}

template <class S>
bool is_active(const ScalarInterval<S>& iv, ReluPhase phase) {
  return phase == ReluPhase::active || branch(value_of(iv.lo) >= 0.0);
}

}  // namespace

template <class S>
IntervalBounds<S> interval_bounds(std::span<const DenseLayer<S>> layers, const AffineInput& input,
                                  const Box& box, const ReluSplits* splits) {
  check_shapes(layers, input, box, splits);
  IntervalBounds<S> out;
  const auto in = input_intervals(input, box);
  std::vector<ScalarInterval<S>> post;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    auto pre = li == 0 ? affine_interval(layers[0], in) : affine_interval(layers[li], post);
    if (li + 1 < layers.size()) {
      post.assign(pre.size(), {});
      for (std::size_t r = 0; r < pre.size(); ++r) {
        const ReluPhase ph = phase_of(splits, li, r);
        if (!apply_phase(pre[r], ph)) {
          out.feasible = false;
          post[r] = {S(0.0), S(0.0)};
          continue;
        }
        if (is_inactive(pre[r], ph)) {
          post[r] = {S(0.0), S(0.0)};
        } else if (is_active(pre[r], ph)) {
          post[r] = pre[r];
        } else {
          post[r] = {S(0.0), pre[r].hi};
        }
      }
    }
    out.pre.push_back(std::move(pre));
  }
  return out;
}

template <class S>
S form_min(const AffineForm<S>& f, const Box& box) {
  S v = f.constant;
  for (std::size_t j = 0; j < f.coeffs.size(); ++j) {
    const S& c = f.coeffs[j];
    v += branch(value_of(c) >= 0.0) ? c * box.lo[j] : c * box.hi[j];
  }
  return v;
}

template <class S>
S form_max(const AffineForm<S>& f, const Box& box) {
  S v = f.constant;
  for (std::size_t j = 0; j < f.coeffs.size(); ++j) {
    const S& c = f.coeffs[j];
    v += branch(value_of(c) >= 0.0) ? c * box.hi[j] : c * box.lo[j];
  }
  return v;
}

namespace {

template <class S>
struct PostForms {
  AffineForm<S> lower;
  AffineForm<S> upper;
  bool zero = false;
};

// acc += w * src, coefficient-wise.
template <class S>
void axpy(AffineForm<S>& acc, const S& w, const AffineForm<S>& src) {
  for (std::size_t j = 0; j < acc.coeffs.size(); ++j) acc.coeffs[j] += w * src.coeffs[j];
  acc.constant += w * src.constant;
}

}  // namespace

template <class S>
LinearBounds<S> symbolic_bounds(std::span<const DenseLayer<S>> layers, const AffineInput& input,
                                const Box& box, const ReluSplits* splits) {
  check_shapes(layers, input, box, splits);
  const std::size_t k = box.dim();
  LinearBounds<S> out;

  // Input forms are exact.
  std::vector<PostForms<S>> post(input.rows);
  std::vector<ScalarInterval<S>> post_iv(input.rows);
  {
    const auto in = input_intervals(input, box);
    for (std::size_t r = 0; r < input.rows; ++r) {
      AffineForm<S> f;
      f.coeffs.resize(k);
      for (std::size_t c = 0; c < k; ++c) f.coeffs[c] = S(input.coeff(r, c));
      f.constant = S(input.offset[r]);
      post[r] = {f, f, false};
      post_iv[r] = {S(in[r].lo), S(in[r].hi)};
    }
  }

  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& l = layers[li];
    const auto ibp = affine_interval(l, post_iv);
    std::vector<NeuronBounds<S>> pre(l.fan_out);
    for (std::size_t r = 0; r < l.fan_out; ++r) {
      auto& nb = pre[r];
      nb.lower.coeffs.assign(k, S(0.0));
      nb.upper.coeffs.assign(k, S(0.0));
      nb.lower.constant = l.bias[r];
      nb.upper.constant = l.bias[r];
      for (std::size_t c = 0; c < l.fan_in; ++c) {
        if (post[c].zero) continue;
        const S& w = l.weight(r, c);
        if (branch(value_of(w) >= 0.0)) {
          axpy(nb.lower, w, post[c].lower);
          axpy(nb.upper, w, post[c].upper);
        } else {
          axpy(nb.lower, w, post[c].upper);
          axpy(nb.upper, w, post[c].lower);
        }
      }
      nb.concrete.lo = max_of(form_min(nb.lower, box), ibp[r].lo);
      nb.concrete.hi = min_of(form_max(nb.upper, box), ibp[r].hi);
    }

    if (li + 1 < layers.size()) {
      std::vector<PostForms<S>> next(l.fan_out);
      std::vector<ScalarInterval<S>> next_iv(l.fan_out);
      for (std::size_t r = 0; r < l.fan_out; ++r) {
        auto& nb = pre[r];
        const ReluPhase ph = phase_of(splits, li, r);
        if (!apply_phase(nb.concrete, ph)) {
          out.feasible = false;
          next[r].zero = true;
          next_iv[r] = {S(0.0), S(0.0)};
          continue;
        }
        if (is_inactive(nb.concrete, ph)) {
          next[r].zero = true;
          next_iv[r] = {S(0.0), S(0.0)};
        } else if (is_active(nb.concrete, ph)) {
          next[r] = {nb.lower, nb.upper, false};
          next_iv[r] = nb.concrete;
        } else {
          const S& lo = nb.concrete.lo;
          const S& hi = nb.concrete.hi;
          const S slope = hi / (hi - lo);
          PostForms<S> pf;
          pf.upper.coeffs.resize(k);
          for (std::size_t j = 0; j < k; ++j) pf.upper.coeffs[j] = slope * nb.upper.coeffs[j];
          pf.upper.constant = slope * (nb.upper.constant - lo);
          if (branch(value_of(hi) >= -value_of(lo))) {
            pf.lower = nb.lower;
          } else {
            pf.lower.coeffs.assign(k, S(0.0));
            pf.lower.constant = S(0.0);
          }
          next[r] = std::move(pf);
          next_iv[r] = {S(0.0), hi};
        }
      }
      post = std::move(next);
      post_iv = std::move(next_iv);
    }
    out.pre.push_back(std::move(pre));
  }
  return out;
}

template IntervalBounds<double> interval_bounds(std::span<const DenseLayer<double>>, const AffineInput&,
                                                const Box&, const ReluSplits*);
template IntervalBounds<ad::Var> interval_bounds(std::span<const DenseLayer<ad::Var>>, const AffineInput&,
                                                 const Box&, const ReluSplits*);
template LinearBounds<double> symbolic_bounds(std::span<const DenseLayer<double>>, const AffineInput&,
                                              const Box&, const ReluSplits*);
template LinearBounds<ad::Var> symbolic_bounds(std::span<const DenseLayer<ad::Var>>, const AffineInput&,
                                               const Box&, const ReluSplits*);
template double form_min(const AffineForm<double>&, const Box&);
template double form_max(const AffineForm<double>&, const Box&);
template ad::Var form_min(const AffineForm<ad::Var>&, const Box&);
template ad::Var form_max(const AffineForm<ad::Var>&, const Box&);

IntervalBounds<double> interval_bounds(const MLPNetwork& net, const Box& box) {
  return interval_bounds<double>(net.layers(), AffineInput::identity(net.input_dim()), box);
}

LinearBounds<double> symbolic_bounds(const MLPNetwork& net, const Box& box) {
  return symbolic_bounds<double>(net.layers(), AffineInput::identity(net.input_dim()), box);
}

namespace {

// Selects the first or second half of a 2n-dimensional paired box.
AffineInput half_selector(std::size_t n, bool second) {
  AffineInput a;
  a.rows = n;
  a.cols = 2 * n;
  a.matrix.assign(n * 2 * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) a.matrix[i * 2 * n + (second ? n + i : i)] = 1.0;
  a.offset.assign(n, 0.0);
  return a;
}

}  // namespace

std::array<IntervalBounds<double>, 2> interval_bounds(const ProductNetwork& pnet, const Box& box) {
  const std::size_t n = pnet.base().input_dim();
  if (box.dim() != 2 * n) throw InputError("product bounds: box must have 2n dimensions");
  const auto& ls = pnet.base().layers();
  return {interval_bounds<double>(ls, half_selector(n, false), box),
          interval_bounds<double>(ls, half_selector(n, true), box)};
}

std::array<LinearBounds<double>, 2> symbolic_bounds(const ProductNetwork& pnet, const Box& box) {
  const std::size_t n = pnet.base().input_dim();
  if (box.dim() != 2 * n) throw InputError("product bounds: box must have 2n dimensions");
  const auto& ls = pnet.base().layers();
  return {symbolic_bounds<double>(ls, half_selector(n, false), box),
          symbolic_bounds<double>(ls, half_selector(n, true), box)};
}

PairedEncoding encode_partition(const FairnessProperty& prop, const DatasetSchema& schema,
                                const Partition& partition, std::size_t first_level, std::size_t second_level) {
  const auto& num = schema.numerical_features();
  const std::size_t m = num.size();
  const std::size_t n = schema.column_count();
  PairedEncoding enc;
  enc.numerical_count = m;
  enc.box.lo.resize(2 * m);
  enc.box.hi.resize(2 * m);
  for (std::size_t k = 0; k < m; ++k) {
    const auto& d = partition.numerical_box[k];
    enc.box.lo[k] = d.lo;
    enc.box.hi[k] = d.hi;
    const double reach = std::min(prop.delta[k], d.hi - d.lo);
    enc.box.lo[m + k] = -reach;
    enc.box.hi[m + k] = reach;
  }
  for (AffineInput* a : {&enc.first, &enc.second}) {
    a->rows = n;
    a->cols = 2 * m;
    a->matrix.assign(n * 2 * m, 0.0);
    a->offset.assign(n, 0.0);
  }
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t col = schema.column_of(num[k]);
    enc.first.matrix[col * 2 * m + k] = 1.0;
    enc.second.matrix[col * 2 * m + k] = 1.0;
    enc.second.matrix[col * 2 * m + m + k] = 1.0;
  }
  for (const auto& [f, level] : partition.assignment) {
    enc.first.offset[schema.column_of(f) + level] = 1.0;
    enc.second.offset[schema.column_of(f) + level] = 1.0;
  }
  const std::size_t sens_col = schema.column_of(schema.sensitive_index());
  enc.first.offset[sens_col + first_level] = 1.0;
  enc.second.offset[sens_col + second_level] = 1.0;
  return enc;
}

Box neighborhood_box(std::span<const double> x, const FairnessProperty& prop, const DatasetSchema& schema,
                     bool pin_sensitive) {
  if (!in_domain(x, prop, schema)) throw InputError("point lies outside the property domain");
  Box box = Box::point(x);
  const auto& num = schema.numerical_features();
  for (std::size_t k = 0; k < num.size(); ++k) {
    const std::size_t c = schema.column_of(num[k]);
    box.lo[c] = std::max(prop.domain[k].lo, x[c] - prop.delta[k]);
    box.hi[c] = std::min(prop.domain[k].hi, x[c] + prop.delta[k]);
  }
  if (!pin_sensitive) {
    const std::size_t s = schema.sensitive_index();
    for (std::size_t c = schema.column_of(s); c < schema.column_of(s) + schema.width_of(s); ++c) {
      box.lo[c] = 0.0;
      box.hi[c] = 1.0;
    }
  }
  return box;
}

Box domain_box(const FairnessProperty& prop, const DatasetSchema& schema) {
  Box box{std::vector<double>(schema.column_count(), 0.0), std::vector<double>(schema.column_count(), 1.0)};
  const auto& num = schema.numerical_features();
  for (std::size_t k = 0; k < num.size(); ++k) {
    const std::size_t c = schema.column_of(num[k]);
    box.lo[c] = prop.domain[k].lo;
    box.hi[c] = prop.domain[k].hi;
  }
  return box;
}

template <class S>
ScalarInterval<S> logit_bounds(std::span<const DenseLayer<S>> layers, const Box& box, BoundMode mode) {
  const auto id = AffineInput::identity(box.dim());
  if (mode == BoundMode::interval) return interval_bounds<S>(layers, id, box).output();
  return symbolic_bounds<S>(layers, id, box).output().concrete;
}

template <class S>
S local_fairness_upper(std::span<const DenseLayer<S>> layers, std::span<const double> x, int y,
                       const FairnessProperty& prop, const DatasetSchema& schema, BoundMode mode,
                       bool pin_sensitive) {
  const Box box = neighborhood_box(x, prop, schema, pin_sensitive);
  const auto iv = logit_bounds<S>(layers, box, mode);
  using certifair::sigmoid;
  return y == 1 ? bce_from_prob(sigmoid(iv.lo), 1) : bce_from_prob(sigmoid(iv.hi), 0);
}

namespace {

template <class S>
S sigmoid_slope(const S& z) {
  using certifair::sigmoid;
  const S s = sigmoid(z);
  return s * (S(1.0) - s);
}

// Bounds on both logits and on their difference over the partition's paired box.
template <class S>
struct PairBounds {
  ScalarInterval<S> first;
  ScalarInterval<S> second;
  ScalarInterval<S> diff;  // first - second
};

template <class S>
PairBounds<S> pair_bounds(std::span<const DenseLayer<S>> layers, const FairnessProperty& prop,
                          const DatasetSchema& schema, const Partition* partition, BoundMode mode) {
  PairBounds<S> pb;
  if (partition == nullptr) {
    // Uncoupled D x D: both copies range over the same box independently.
    const auto iv = logit_bounds<S>(layers, domain_box(prop, schema), mode);
    pb.first = iv;
    pb.second = iv;
    pb.diff = {iv.lo - iv.hi, iv.hi - iv.lo};
    return pb;
  }
  const auto enc = encode_partition(prop, schema, *partition, partition->sensitive_pair.first,
                                    partition->sensitive_pair.second);
  if (mode == BoundMode::interval) {
    pb.first = interval_bounds<S>(layers, enc.first, enc.box).output();
    pb.second = interval_bounds<S>(layers, enc.second, enc.box).output();
    pb.diff = {pb.first.lo - pb.second.hi, pb.first.hi - pb.second.lo};
    return pb;
  }
  const auto a = symbolic_bounds<S>(layers, enc.first, enc.box);
  const auto b = symbolic_bounds<S>(layers, enc.second, enc.box);
  pb.first = a.output().concrete;
  pb.second = b.output().concrete;
  AffineForm<S> dlo = a.output().lower;
  AffineForm<S> dhi = a.output().upper;
  for (std::size_t j = 0; j < dlo.coeffs.size(); ++j) {
    dlo.coeffs[j] -= b.output().upper.coeffs[j];
    dhi.coeffs[j] -= b.output().lower.coeffs[j];
  }
  dlo.constant -= b.output().upper.constant;
  dhi.constant -= b.output().lower.constant;
  pb.diff = {max_of(form_min(dlo, enc.box), pb.first.lo - pb.second.hi),
             min_of(form_max(dhi, enc.box), pb.first.hi - pb.second.lo)};
  return pb;
}

}  // namespace

template <class S>
S global_logit_gap_upper(std::span<const DenseLayer<S>> layers, const FairnessProperty& prop,
                         const DatasetSchema& schema, const Partition* partition, BoundMode mode) {
  const auto pb = pair_bounds<S>(layers, prop, schema, partition, mode);
  return max_of(S(0.0), max_of(pb.diff.hi, -pb.diff.lo));
}

template <class S>
S global_fairness_upper(std::span<const DenseLayer<S>> layers, const FairnessProperty& prop,
                        const DatasetSchema& schema, const Partition* partition, BoundMode mode) {
  using certifair::sigmoid;
  const auto pb = pair_bounds<S>(layers, prop, schema, partition, mode);
  // Endpoint bound from the monotonicity of the sigmoid.
  const S endpoint = max_of(sigmoid(pb.first.hi) - sigmoid(pb.second.lo),
                            sigmoid(pb.second.hi) - sigmoid(pb.first.lo));
  if (partition == nullptr) return max_of(S(0.0), endpoint);
  // Lipschitz bound: the largest sigmoid slope over the joint logit range
  // times the largest logit difference.
  const S lo = min_of(pb.first.lo, pb.second.lo);
  const S hi = max_of(pb.first.hi, pb.second.hi);
  S slope = S(0.25);
  if (branch(value_of(lo) > 0.0)) {
    slope = sigmoid_slope(lo);
  } else if (branch(value_of(hi) < 0.0)) {
    slope = sigmoid_slope(hi);
  }
  const S lipschitz = slope * max_of(S(0.0), max_of(pb.diff.hi, -pb.diff.lo));
  return max_of(S(0.0), min_of(endpoint, lipschitz));
}

template ScalarInterval<double> logit_bounds(std::span<const DenseLayer<double>>, const Box&, BoundMode);
template ScalarInterval<ad::Var> logit_bounds(std::span<const DenseLayer<ad::Var>>, const Box&, BoundMode);
template double local_fairness_upper(std::span<const DenseLayer<double>>, std::span<const double>, int,
                                     const FairnessProperty&, const DatasetSchema&, BoundMode, bool);
template ad::Var local_fairness_upper(std::span<const DenseLayer<ad::Var>>, std::span<const double>, int,
                                      const FairnessProperty&, const DatasetSchema&, BoundMode, bool);
template double global_fairness_upper(std::span<const DenseLayer<double>>, const FairnessProperty&,
                                      const DatasetSchema&, const Partition*, BoundMode);
template ad::Var global_fairness_upper(std::span<const DenseLayer<ad::Var>>, const FairnessProperty&,
                                       const DatasetSchema&, const Partition*, BoundMode);
template double global_logit_gap_upper(std::span<const DenseLayer<double>>, const FairnessProperty&,
                                       const DatasetSchema&, const Partition*, BoundMode);
template ad::Var global_logit_gap_upper(std::span<const DenseLayer<ad::Var>>, const FairnessProperty&,
                                        const DatasetSchema&, const Partition*, BoundMode);

double local_fairness_upper(const MLPNetwork& net, std::span<const double> x, int y,
                            const FairnessProperty& prop, const DatasetSchema& schema, BoundMode mode,
                            bool pin_sensitive) {
  return local_fairness_upper<double>(net.layers(), x, y, prop, schema, mode, pin_sensitive);
}

double global_fairness_upper(const MLPNetwork& net, const FairnessProperty& prop, const DatasetSchema& schema,
                             const Partition* partition, BoundMode mode) {
  return global_fairness_upper<double>(net.layers(), prop, schema, partition, mode);
}

}  // namespace certifair
