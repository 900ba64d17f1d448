#pragma once

// Complete branch-and-bound verification of individual fairness.
//
// A query asks for a point z in a box (plus linear side constraints) such that
// one copy of the network is classified 1 (logit >= 0) while another copy, or
// the fixed class of a reference point, is classified 0 (logit <= -margin).
// Nodes are pruned with symbolic bounds and the triangle LP relaxation; once
// every ReLU on the path is decided the LP is exact.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "certifair/bounds.hpp"
#include "certifair/dataset.hpp"
#include "certifair/network.hpp"
#include "certifair/property.hpp"
#include "json.hpp"

namespace certifair {

inline constexpr double kMarginTau = 1e-6;

struct VerifierLimits {
  std::size_t max_nodes = 100000;
  double timeout_secs = 60.0;

  nlohmann::json to_json() const;
};

enum class VerdictKind { fair, unfair, resource_limit };

std::string to_string(VerdictKind kind);

struct Verdict {
  VerdictKind kind = VerdictKind::fair;
  std::optional<CounterexamplePair> counterexample;
  std::size_t nodes_visited = 0;
  std::size_t nodes_expanded = 0;  // number of ReLU splits performed
  double millis = 0.0;
};

Verdict verify_partition(const MLPNetwork& net, const Partition& partition, const FairnessProperty& prop,
                         const DatasetSchema& schema, const VerifierLimits& limits);

/// Is there an x' similar to x (and in the domain) with a different class?
/// With `pin_sensitive` x' keeps x's sensitive level.
Verdict verify_local(const MLPNetwork& net, std::span<const double> x, const FairnessProperty& prop,
                     const DatasetSchema& schema, const VerifierLimits& limits, bool pin_sensitive = false);

struct PartitionResult {
  Partition partition;
  Verdict verdict;
};

struct CertificationReport {
  std::vector<PartitionResult> partitions;
  double certified_pct = 0.0;
  std::size_t fair = 0;
  std::size_t unfair = 0;
  std::size_t resource_limited = 0;
  std::optional<double> accuracy_pct;
  std::optional<double> positivity_pct;
  FairnessProperty property;
  VerifierLimits limits;

  std::size_t total_nodes_expanded() const;
  nlohmann::json to_json(const DatasetSchema& schema) const;
};

/// Verifies every partition; `jobs` worker threads share the partition list.
CertificationReport certify(const MLPNetwork& net, const FairnessProperty& prop, const DatasetSchema& schema,
                            const VerifierLimits& limits, std::size_t jobs = 1,
                            std::size_t partition_cap = kDefaultPartitionCap);

}  // namespace certifair
