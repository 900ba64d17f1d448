#pragma once

// Fixtures and brute-force oracles shared by the unit and acceptance tests.
// The oracles only use forward evaluation; they never call into the bounds,
// LP or verifier code they are used to check.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "certifair/dataset.hpp"
#include "certifair/network.hpp"
#include "certifair/property.hpp"
#include "certifair/verifier.hpp"

namespace certifair::testing {

/// Numerical features n0.. (raw range [0, 1]), categoricals c0.. with the
/// given level counts, then the sensitive feature "s".  Label "y", positive "1".
inline DatasetSchema make_schema(std::size_t numerical, const std::vector<std::size_t>& categorical_levels,
                                 std::size_t sensitive_levels) {
  std::vector<FeatureSpec> fs;
  for (std::size_t i = 0; i < numerical; ++i) {
    FeatureSpec f;
    f.name = "n" + std::to_string(i);
    f.kind = FeatureKind::numerical;
    f.raw_min = 0.0;
    f.raw_max = 1.0;
    fs.push_back(f);
  }
  for (std::size_t i = 0; i < categorical_levels.size(); ++i) {
    FeatureSpec f;
    f.name = "c" + std::to_string(i);
    f.kind = FeatureKind::categorical;
    for (std::size_t l = 0; l < categorical_levels[i]; ++l) f.levels.push_back("L" + std::to_string(l));
    fs.push_back(f);
  }
  FeatureSpec s;
  s.name = "s";
  s.kind = FeatureKind::categorical;
  for (std::size_t l = 0; l < sensitive_levels; ++l) s.levels.push_back("S" + std::to_string(l));
  fs.push_back(s);
  return DatasetSchema(fs, "s", {"y", "1"});
}

inline FairnessProperty make_property(const DatasetSchema& schema, double delta, std::vector<Interval> domain = {}) {
  FairnessProperty p;
  p.property_class = delta == 0.0 ? PropertyClass::P1 : PropertyClass::P2;
  p.sensitive_feature = schema.sensitive_feature();
  const std::size_t m = schema.numerical_features().size();
  p.domain = domain.empty() ? std::vector<Interval>(m, Interval{0.0, 1.0}) : std::move(domain);
  p.delta.assign(m, delta);
  return p;
}

/// Weights uniform in [-w, w], biases uniform in [-b, b].
inline MLPNetwork random_net(const std::vector<std::size_t>& dims, std::mt19937_64& rng, double w = 1.0,
                             double b = 0.5) {
  std::uniform_real_distribution<double> uw(-w, w);
  std::uniform_real_distribution<double> ub(-b, b);
  std::vector<DenseLayer<double>> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer<double> l;
    l.fan_in = dims[i];
    l.fan_out = dims[i + 1];
    for (std::size_t k = 0; k < l.fan_in * l.fan_out; ++k) l.weights.push_back(uw(rng));
    for (std::size_t k = 0; k < l.fan_out; ++k) l.bias.push_back(ub(rng));
    layers.push_back(std::move(l));
  }
  return MLPNetwork(dims.front(), std::move(layers));
}

/// lo, ..., hi with spacing at most `step`; both endpoints included.
inline std::vector<double> linspace(double lo, double hi, double step) {
  if (hi <= lo) return {lo};
  const auto n = static_cast<std::size_t>(std::ceil((hi - lo) / step - 1e-9));
  std::vector<double> v(n + 1);
  for (std::size_t i = 0; i <= n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n);
  v.back() = hi;
  return v;
}

/// Iterates over the Cartesian product of the given axes.
template <class F>
void for_each_grid_point(const std::vector<std::vector<double>>& axes, F&& f) {
  std::vector<double> pt(axes.size());
  std::vector<std::size_t> idx(axes.size(), 0);
  if (std::any_of(axes.begin(), axes.end(), [](const auto& a) { return a.empty(); })) return;
  while (true) {
    for (std::size_t i = 0; i < axes.size(); ++i) pt[i] = axes[i][idx[i]];
    f(pt);
    std::size_t k = 0;
    while (k < axes.size()) {
      if (++idx[k] < axes[k].size()) break;
      idx[k] = 0;
      ++k;
    }
    if (k == axes.size()) return;
  }
}

struct GridResult {
  std::size_t pairs = 0;
  std::size_t class_flips = 0;   // h(x) != h(x')
  std::size_t margin_flips = 0;  // one logit >= 0, the other <= -margin
};

/// Exhaustive grid over a partition: x on a grid over the numerical box, e on
/// a grid over [-delta, delta], keeping only x + e inside the box.
inline GridResult grid_partition(const MLPNetwork& net, const FairnessProperty& prop, const DatasetSchema& schema,
                                 const Partition& part, double step, double margin) {
  const auto& num = schema.numerical_features();
  const std::size_t m = num.size();
  std::vector<double> base(schema.column_count(), 0.0);
  for (const auto& [f, level] : part.assignment) base[schema.column_of(f) + level] = 1.0;
  const std::size_t s_col = schema.column_of(schema.sensitive_index());
  std::vector<double> xa = base;
  std::vector<double> xb = base;
  xa[s_col + part.sensitive_pair.first] = 1.0;
  xb[s_col + part.sensitive_pair.second] = 1.0;

  std::vector<std::vector<double>> x_axes, e_axes;
  for (std::size_t k = 0; k < m; ++k) {
    x_axes.push_back(linspace(part.numerical_box[k].lo, part.numerical_box[k].hi, step));
    e_axes.push_back(linspace(-prop.delta[k], prop.delta[k], step));
  }
  GridResult res;
  for_each_grid_point(x_axes, [&](const std::vector<double>& xv) {
    for (std::size_t k = 0; k < m; ++k) xa[schema.column_of(num[k])] = xv[k];
    const double la = forward(net, xa).logit;
    for_each_grid_point(e_axes, [&](const std::vector<double>& ev) {
      for (std::size_t k = 0; k < m; ++k) {
        const double v = xv[k] + ev[k];
        if (v < part.numerical_box[k].lo || v > part.numerical_box[k].hi) return;
        xb[schema.column_of(num[k])] = v;
      }
      const double lb = forward(net, xb).logit;
      ++res.pairs;
      if ((la >= 0.0) != (lb >= 0.0)) ++res.class_flips;
      if ((la >= 0.0 && lb <= -margin) || (lb >= 0.0 && la <= -margin)) ++res.margin_flips;
    });
  });
  return res;
}

/// Grid over the neighborhood of x: numericals x +- delta inside the domain;
/// every sensitive level (or only x's own when pinned).  Counts x' whose
/// class differs from x (with and without the margin).
inline GridResult grid_local(const MLPNetwork& net, const std::vector<double>& x, const FairnessProperty& prop,
                             const DatasetSchema& schema, double step, double margin, bool pin_sensitive) {
  const auto& num = schema.numerical_features();
  const std::size_t s_idx = schema.sensitive_index();
  const std::size_t s_col = schema.column_of(s_idx);
  const std::size_t width = schema.width_of(s_idx);
  const double lx = forward(net, x).logit;
  std::vector<std::vector<double>> axes;
  for (std::size_t k = 0; k < num.size(); ++k) {
    const double c = x[schema.column_of(num[k])];
    axes.push_back(linspace(std::max(prop.domain[k].lo, c - prop.delta[k]),
                            std::min(prop.domain[k].hi, c + prop.delta[k]), step));
  }
  GridResult res;
  for (std::size_t level = 0; level < width; ++level) {
    if (pin_sensitive && x[s_col + level] != 1.0) continue;
    std::vector<double> xp = x;
    for (std::size_t j = 0; j < width; ++j) xp[s_col + j] = j == level ? 1.0 : 0.0;
    for_each_grid_point(axes, [&](const std::vector<double>& v) {
      for (std::size_t k = 0; k < num.size(); ++k) xp[schema.column_of(num[k])] = v[k];
      const double l = forward(net, xp).logit;
      ++res.pairs;
      if ((lx >= 0.0) != (l >= 0.0)) ++res.class_flips;
      if ((lx >= 0.0 && l <= -margin) || (l >= 0.0 && lx <= -margin)) ++res.margin_flips;
    });
  }
  return res;
}

/// Uniform point of the property domain: numericals inside their intervals,
/// every categorical a random one-hot.
inline std::vector<double> random_domain_point(const FairnessProperty& prop, const DatasetSchema& schema,
                                               std::mt19937_64& rng) {
  std::vector<double> x(schema.column_count(), 0.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto& num = schema.numerical_features();
  for (std::size_t k = 0; k < num.size(); ++k) {
    x[schema.column_of(num[k])] = prop.domain[k].lo + (prop.domain[k].hi - prop.domain[k].lo) * u(rng);
  }
  for (std::size_t f = 0; f < schema.features().size(); ++f) {
    if (schema.features()[f].kind != FeatureKind::categorical) continue;
    const std::size_t w = schema.width_of(f);
    x[schema.column_of(f) + static_cast<std::size_t>(rng() % w)] = 1.0;
  }
  return x;
}

/// A point similar to x: numericals moved by at most delta (clamped into the
/// domain), sensitive level redrawn.
inline std::vector<double> random_similar_point(const std::vector<double>& x, const FairnessProperty& prop,
                                                const DatasetSchema& schema, std::mt19937_64& rng) {
  std::vector<double> xp = x;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto& num = schema.numerical_features();
  for (std::size_t k = 0; k < num.size(); ++k) {
    const std::size_t c = schema.column_of(num[k]);
    const double lo = std::max(prop.domain[k].lo, x[c] - prop.delta[k]);
    const double hi = std::min(prop.domain[k].hi, x[c] + prop.delta[k]);
    xp[c] = std::clamp(x[c] + prop.delta[k] * u(rng), lo, hi);
  }
  const std::size_t s = schema.sensitive_index();
  const std::size_t col = schema.column_of(s);
  const std::size_t w = schema.width_of(s);
  for (std::size_t j = 0; j < w; ++j) xp[col + j] = 0.0;
  xp[col + static_cast<std::size_t>(rng() % w)] = 1.0;
  return xp;
}

/// |a - b| / max(floor, |a|, |b|).
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({floor, std::abs(a), std::abs(b)});
}

}  // namespace certifair::testing
