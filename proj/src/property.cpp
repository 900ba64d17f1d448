#include "certifair/property.hpp"

#include <cmath>
#include <limits>

#include "certifair/errors.hpp"
#include "certifair/model_io.hpp"

namespace certifair {

using nlohmann::json;

void FairnessProperty::validate(const DatasetSchema& schema) const {
  if (sensitive_feature != schema.sensitive_feature()) {
    throw ConfigError("property sensitive feature '" + sensitive_feature + "' does not match schema '" +
                      schema.sensitive_feature() + "'");
  }
  const auto& num = schema.numerical_features();
  if (domain.size() != num.size()) {
    throw ConfigError("property domain has " + std::to_string(domain.size()) + " intervals, schema has " +
                      std::to_string(num.size()) + " numerical features");
  }
  if (delta.size() != num.size()) {
    throw ConfigError("property delta has " + std::to_string(delta.size()) + " entries, schema has " +
                      std::to_string(num.size()) + " numerical features");
  }
  for (std::size_t k = 0; k < num.size(); ++k) {
    const auto& name = schema.features()[num[k]].name;
    const auto& d = domain[k];
    if (!(std::isfinite(d.lo) && std::isfinite(d.hi)) || d.lo > d.hi || d.lo < 0.0 || d.hi > 1.0) {
      throw ConfigError("property domain for feature '" + name + "' must satisfy 0 <= l <= u <= 1");
    }
    if (!std::isfinite(delta[k]) || delta[k] < 0.0) {
      throw ConfigError("property delta for feature '" + name + "' must be a finite value >= 0");
    }
    if (property_class == PropertyClass::P1 && delta[k] != 0.0) {
      throw ConfigError("P1 property requires delta = 0, feature '" + name + "' has " +
                        std::to_string(delta[k]));
    }
  }
}

FairnessProperty FairnessProperty::from_json(const json& j) {
  try {
    FairnessProperty p;
    const auto cls = j.at("class").get<std::string>();
    if (cls == "P1") {
      p.property_class = PropertyClass::P1;
    } else if (cls == "P2") {
      p.property_class = PropertyClass::P2;
    } else {
      throw ConfigError("property class must be \"P1\" or \"P2\", got \"" + cls + "\"");
    }
    p.sensitive_feature = j.at("sensitive_feature").get<std::string>();
    for (const auto& iv : j.at("domain")) {
      if (!iv.is_array() || iv.size() != 2) throw ConfigError("property domain entries must be [l, u]");
      p.domain.push_back({iv[0].get<double>(), iv[1].get<double>()});
    }
    p.delta = j.at("delta").get<std::vector<double>>();
    return p;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("property: ") + e.what());
  }
}

json FairnessProperty::to_json() const {
  json dom = json::array();
  for (const auto& d : domain) dom.push_back({d.lo, d.hi});
  return {{"class", property_class == PropertyClass::P1 ? "P1" : "P2"},
          {"sensitive_feature", sensitive_feature},
          {"domain", dom},
          {"delta", delta}};
}

FairnessProperty load_property(const std::filesystem::path& path, const DatasetSchema& schema) {
  auto p = FairnessProperty::from_json(read_json_file(path));
  p.validate(schema);
  return p;
}

namespace {

void check_dims(std::span<const double> x, const DatasetSchema& schema) {
  if (x.size() != schema.column_count()) {
    throw InputError("vector has " + std::to_string(x.size()) + " columns, schema expects " +
                     std::to_string(schema.column_count()));
  }
}

bool valid_one_hot(std::span<const double> x, std::size_t begin, std::size_t width) {
  std::size_t ones = 0;
  for (std::size_t c = begin; c < begin + width; ++c) {
    if (x[c] == 1.0) {
      ++ones;
    } else if (x[c] != 0.0) {
      return false;
    }
  }
  return ones == 1;
}

}  // namespace

bool is_similar(std::span<const double> x, std::span<const double> x_prime, const FairnessProperty& prop,
                const DatasetSchema& schema) {
  check_dims(x, schema);
  check_dims(x_prime, schema);
  const auto& num = schema.numerical_features();
  for (std::size_t k = 0; k < num.size(); ++k) {
    const std::size_t c = schema.column_of(num[k]);
    if (!(std::abs(x[c] - x_prime[c]) <= prop.delta[k] + kSimilaritySlack)) return false;
  }
  for (std::size_t f : schema.nonsensitive_categoricals()) {
    const std::size_t b = schema.column_of(f);
    for (std::size_t c = b; c < b + schema.width_of(f); ++c) {
      if (x[c] != x_prime[c]) return false;
    }
  }
  return true;
}

bool in_domain(std::span<const double> x, const FairnessProperty& prop, const DatasetSchema& schema) {
  check_dims(x, schema);
  const auto& num = schema.numerical_features();
  for (std::size_t k = 0; k < num.size(); ++k) {
    const double v = x[schema.column_of(num[k])];
    if (!(v >= prop.domain[k].lo && v <= prop.domain[k].hi)) return false;
  }
  const auto& fs = schema.features();
  for (std::size_t i = 0; i < fs.size(); ++i) {
    if (fs[i].kind == FeatureKind::categorical && !valid_one_hot(x, schema.column_of(i), schema.width_of(i))) {
      return false;
    }
  }
  return true;
}

json Partition::assignment_json(const DatasetSchema& schema) const {
  json a = json::object();
  for (const auto& [f, level] : assignment) {
    const auto& spec = schema.features()[f];
    a[spec.name] = spec.levels[level];
  }
  return a;
}

json Partition::sensitive_pair_json(const DatasetSchema& schema) const {
  const auto& levels = schema.features()[schema.sensitive_index()].levels;
  return json::array({levels[sensitive_pair.first], levels[sensitive_pair.second]});
}

std::size_t partition_count(const DatasetSchema& schema) {
  constexpr std::size_t kMax = std::numeric_limits<std::size_t>::max();
  const std::size_t s = schema.features()[schema.sensitive_index()].levels.size();
  std::size_t count = s * (s - 1) / 2;
  for (std::size_t f : schema.nonsensitive_categoricals()) {
    const std::size_t w = schema.width_of(f);
    if (count > kMax / w) return kMax;
    count *= w;
  }
  return count;
}

std::vector<Partition> enumerate_partitions(const FairnessProperty& prop, const DatasetSchema& schema,
                                            std::size_t cap) {
  const std::size_t total = partition_count(schema);
  if (total > cap) {
    throw ResourceError("property has " + std::to_string(total) + " partitions, cap is " +
                        std::to_string(cap));
  }
  const auto& cats = schema.nonsensitive_categoricals();
  const std::size_t s = schema.features()[schema.sensitive_index()].levels.size();
  std::vector<Partition> out;
  out.reserve(total);
  std::vector<std::size_t> counter(cats.size(), 0);
  while (true) {
    for (std::size_t a = 0; a < s; ++a) {
      for (std::size_t b = a + 1; b < s; ++b) {
        Partition p;
        for (std::size_t k = 0; k < cats.size(); ++k) p.assignment.emplace_back(cats[k], counter[k]);
        p.sensitive_pair = {a, b};
        p.numerical_box = prop.domain;
        out.push_back(std::move(p));
      }
    }
    // Odometer increment, last categorical fastest.
    std::size_t k = cats.size();
    while (k > 0) {
      --k;
      if (++counter[k] < schema.width_of(cats[k])) break;
      counter[k] = 0;
      if (k == 0) return out;
    }
    if (cats.empty()) return out;
  }
}

json CounterexamplePair::to_json() const {
  return {{"x", x},
          {"x_prime", x_prime},
          {"logit_x", logit_x},
          {"logit_x_prime", logit_x_prime},
          {"classes", json::array({class_x, class_x_prime})}};
}

CounterexamplePair CounterexamplePair::from_json(const json& j) {
  CounterexamplePair p;
  p.x = j.at("x").get<std::vector<double>>();
  p.x_prime = j.at("x_prime").get<std::vector<double>>();
  p.logit_x = j.at("logit_x").get<double>();
  p.logit_x_prime = j.at("logit_x_prime").get<double>();
  p.class_x = j.at("classes").at(0).get<int>();
  p.class_x_prime = j.at("classes").at(1).get<int>();
  return p;
}

CounterexamplePair make_pair(const MLPNetwork& net, std::vector<double> x, std::vector<double> x_prime) {
  CounterexamplePair p;
  p.logit_x = forward(net, x).logit;
  p.logit_x_prime = forward(net, x_prime).logit;
  p.class_x = p.logit_x >= 0.0 ? 1 : 0;
  p.class_x_prime = p.logit_x_prime >= 0.0 ? 1 : 0;
  p.x = std::move(x);
  p.x_prime = std::move(x_prime);
  return p;
}

bool validate_counterexample(const MLPNetwork& net, const CounterexamplePair& pair,
                             const FairnessProperty& prop, const DatasetSchema& schema) {
  if (pair.x.size() != schema.column_count() || pair.x_prime.size() != schema.column_count() ||
      pair.x.size() != net.input_dim()) {
    return false;
  }
  for (double v : pair.x) if (!std::isfinite(v)) return false;
  for (double v : pair.x_prime) if (!std::isfinite(v)) return false;
  const int hx = predict(net, pair.x);
  const int hxp = predict(net, pair.x_prime);
  if (hx == hxp) return false;
  if (hx != pair.class_x || hxp != pair.class_x_prime) return false;
  return in_domain(pair.x, prop, schema) && in_domain(pair.x_prime, prop, schema) &&
         is_similar(pair.x, pair.x_prime, prop, schema);
}

}  // namespace certifair
