#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "certifair/dataset.hpp"
#include "certifair/network.hpp"
#include "json.hpp"

namespace certifair {

/// P1: only the sensitive attribute may differ.  P2: numerical features may
/// additionally differ by up to delta_i.
enum class PropertyClass { P1, P2 };

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Global individual fairness property over the scaled feature space.
/// `domain` and `delta` are aligned with the schema's numerical features.
struct FairnessProperty {
  PropertyClass property_class = PropertyClass::P2;
  std::string sensitive_feature;
  std::vector<Interval> domain;
  std::vector<double> delta;

  /// Throws ConfigError naming the offending feature on any misalignment.
  void validate(const DatasetSchema& schema) const;

  static FairnessProperty from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

FairnessProperty load_property(const std::filesystem::path& path, const DatasetSchema& schema);

/// Slack added to every delta_i when testing similarity.
inline constexpr double kSimilaritySlack = 1e-9;

bool is_similar(std::span<const double> x, std::span<const double> x_prime, const FairnessProperty& prop,
                const DatasetSchema& schema);

/// Numerical coordinates inside the property box and every categorical group a
/// valid one-hot vector.
bool in_domain(std::span<const double> x, const FairnessProperty& prop, const DatasetSchema& schema);

/// One categorical assignment shared by both individuals plus the pair of
/// sensitive levels they take.  Level and feature indices follow the schema.
struct Partition {
  std::vector<std::pair<std::size_t, std::size_t>> assignment;  // (feature index, level index)
  std::pair<std::size_t, std::size_t> sensitive_pair;           // first < second
  std::vector<Interval> numerical_box;

  nlohmann::json assignment_json(const DatasetSchema& schema) const;
  nlohmann::json sensitive_pair_json(const DatasetSchema& schema) const;
};

inline constexpr std::size_t kDefaultPartitionCap = 4096;

/// Number of partitions enumerate_partitions would produce (saturating).
std::size_t partition_count(const DatasetSchema& schema);

/// Non-sensitive assignments (schema order, last feature fastest) x unordered
/// sensitive pairs (lexicographic).  ResourceError above `cap`.
std::vector<Partition> enumerate_partitions(const FairnessProperty& prop, const DatasetSchema& schema,
                                            std::size_t cap = kDefaultPartitionCap);

struct CounterexamplePair {
  std::vector<double> x;
  std::vector<double> x_prime;
  double logit_x = 0.0;
  double logit_x_prime = 0.0;
  int class_x = 0;
  int class_x_prime = 0;

  nlohmann::json to_json() const;
  static CounterexamplePair from_json(const nlohmann::json& j);
};

/// Builds a pair with logits and classes filled from exact forward passes.
CounterexamplePair make_pair(const MLPNetwork& net, std::vector<double> x, std::vector<double> x_prime);

/// Re-evaluates the pair from scratch: classes differ, similar, both in domain.
bool validate_counterexample(const MLPNetwork& net, const CounterexamplePair& pair,
                             const FairnessProperty& prop, const DatasetSchema& schema);

}  // namespace certifair
