#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "certifair/bounds.hpp"
#include "certifair/dataset.hpp"
#include "certifair/network.hpp"
#include "certifair/property.hpp"
#include "certifair/verifier.hpp"
#include "json.hpp"

namespace certifair {

enum class Regularizer { none, local, global };

struct TrainingConfig {
  double lambda_f = 0.0;
  Regularizer regularizer = Regularizer::none;
  double learning_rate = 0.001;
  std::size_t epochs = 50;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  BoundMode bound_mode = BoundMode::interval;
  std::vector<std::size_t> architecture{20, 20};  // hidden widths
  double train_fraction = kDefaultTrainFraction;

  void validate() const;
  static TrainingConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double natural_loss = 0.0;
  double fairness_loss = 0.0;
  double test_acc = 0.0;
  std::optional<double> certified_fairness;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;

  std::string to_csv() const;
};

/// The differentiable surrogate added to the loss: mean local bound over the
/// batch points inside the property domain, or the whole-domain global bound.
double fairness_loss_term(const MLPNetwork& net, std::span<const LabeledPoint> batch,
                          const FairnessProperty& prop, const DatasetSchema& schema, const TrainingConfig& cfg);

struct CompositeLoss {
  double natural = 0.0;
  double fairness = 0.0;
  double total = 0.0;  // (1 - lambda) natural + lambda fairness
  std::vector<double> gradient;
};

/// Composite loss and its exact gradient (canonical parameter layout).
CompositeLoss composite_loss(const MLPNetwork& net, std::span<const LabeledPoint> batch,
                             const FairnessProperty& prop, const DatasetSchema& schema, const TrainingConfig& cfg);

struct TrainingOptions {
  bool certify_each_epoch = false;
  VerifierLimits limits;
};

struct TrainingResult {
  MLPNetwork net;
  TrainingHistory history;
};

TrainingResult train(const Dataset& train_ds, const Dataset& test_ds, const FairnessProperty& prop,
                     const DatasetSchema& schema, const TrainingConfig& cfg, const TrainingOptions& options = {});

}  // namespace certifair
