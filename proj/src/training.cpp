#include "certifair/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "certifair/errors.hpp"

namespace certifair {

using nlohmann::json;

void TrainingConfig::validate() const {
  if (!(lambda_f >= 0.0 && lambda_f <= 1.0)) throw ConfigError("lambda_f must lie in [0, 1]");
  if (lambda_f > 0.0 && regularizer == Regularizer::none) {
    throw ConfigError("lambda_f > 0 requires a regularizer (local or global)");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  for (std::size_t w : architecture) {
    if (w == 0) throw ConfigError("architecture widths must be >= 1");
  }
}

namespace {

Regularizer parse_regularizer(const std::string& s) {
  if (s == "none") return Regularizer::none;
  if (s == "local") return Regularizer::local;
  if (s == "global") return Regularizer::global;
  throw ConfigError("regularizer must be none, local or global, got \"" + s + "\"");
}

std::string regularizer_name(Regularizer r) {
  switch (r) {
    case Regularizer::none: return "none";
    case Regularizer::local: return "local";
    case Regularizer::global: return "global";
  }
  return "none";
}

BoundMode parse_bound_mode(const std::string& s) {
  if (s == "interval") return BoundMode::interval;
  if (s == "symbolic") return BoundMode::symbolic;
  throw ConfigError("bound_mode must be interval or symbolic, got \"" + s + "\"");
}

}  // namespace

TrainingConfig TrainingConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  TrainingConfig c;
  try {
    c.lambda_f = j.value("lambda_f", c.lambda_f);
    c.regularizer = parse_regularizer(j.value("regularizer", std::string("none")));
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.bound_mode = parse_bound_mode(j.value("bound_mode", std::string("interval")));
    if (j.contains("architecture")) c.architecture = j.at("architecture").get<std::vector<std::size_t>>();
    c.train_fraction = j.value("train_fraction", c.train_fraction);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

json TrainingConfig::to_json() const {
  return {{"lambda_f", lambda_f},
          {"regularizer", regularizer_name(regularizer)},
          {"learning_rate", learning_rate},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"seed", seed},
          {"bound_mode", bound_mode == BoundMode::interval ? "interval" : "symbolic"},
          {"architecture", architecture},
          {"train_fraction", train_fraction}};
}

std::string TrainingHistory::to_csv() const {
  const bool with_cert = std::any_of(epochs.begin(), epochs.end(),
                                     [](const EpochRecord& e) { return e.certified_fairness.has_value(); });
  std::ostringstream os;
  os.precision(17);
  os << "epoch,natural_loss,fairness_loss,test_acc";
  if (with_cert) os << ",certified_fairness";
  os << '\n';
  for (const auto& e : epochs) {
    os << e.epoch << ',' << e.natural_loss << ',' << e.fairness_loss << ',' << e.test_acc;
    if (with_cert) {
      os << ',';
      if (e.certified_fairness) os << *e.certified_fairness;
    }
    os << '\n';
  }
  return os.str();
}

namespace {

// Fairness term on a tape; returns nullopt when no batch point contributes.
std::optional<ad::Var> fairness_on_tape(std::span<const DenseLayer<ad::Var>> layers,
                                        std::span<const LabeledPoint> batch, const FairnessProperty& prop,
                                        const DatasetSchema& schema, const TrainingConfig& cfg) {
  if (cfg.regularizer == Regularizer::global) {
    return global_fairness_upper<ad::Var>(layers, prop, schema, nullptr, cfg.bound_mode);
  }
  ad::Var sum(0.0);
  std::size_t used = 0;
  for (const auto& p : batch) {
    if (!in_domain(p.x, prop, schema)) continue;
    sum += local_fairness_upper<ad::Var>(layers, p.x, p.y, prop, schema, cfg.bound_mode);
    ++used;
  }
  if (used == 0) return std::nullopt;
  return sum * ad::Var(1.0 / static_cast<double>(used));
}

}  // namespace

double fairness_loss_term(const MLPNetwork& net, std::span<const LabeledPoint> batch, const FairnessProperty& prop,
                          const DatasetSchema& schema, const TrainingConfig& cfg) {
  if (cfg.regularizer == Regularizer::none) throw ConfigError("fairness_loss_term needs a regularizer");
  if (batch.empty() && cfg.regularizer == Regularizer::local) throw InputError("empty batch");
  if (cfg.regularizer == Regularizer::global) {
    return global_fairness_upper<double>(net.layers(), prop, schema, nullptr, cfg.bound_mode);
  }
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& p : batch) {
    if (!in_domain(p.x, prop, schema)) continue;
    sum += local_fairness_upper<double>(net.layers(), p.x, p.y, prop, schema, cfg.bound_mode);
    ++used;
  }
  return used == 0 ? 0.0 : sum / static_cast<double>(used);
}

CompositeLoss composite_loss(const MLPNetwork& net, std::span<const LabeledPoint> batch,
                             const FairnessProperty& prop, const DatasetSchema& schema, const TrainingConfig& cfg) {
  if (batch.empty()) throw InputError("gradients of an empty batch");
  CompositeLoss out;
  auto nat = bce_gradients(net, batch);
  out.natural = nat.loss;
  out.gradient = std::move(nat.gradient);
  const double lambda = cfg.lambda_f;
  if (cfg.regularizer == Regularizer::none || lambda == 0.0) {
    out.total = out.natural;
    if (cfg.regularizer != Regularizer::none) out.fairness = fairness_loss_term(net, batch, prop, schema, cfg);
    return out;
  }
  ad::Tape tape;
  const auto [layers, first] = lift_parameters(net, tape);
  const auto term = fairness_on_tape(layers, batch, prop, schema, cfg);
  std::vector<double> fair_grad(out.gradient.size(), 0.0);
  if (term) {
    out.fairness = term->value();
    if (!term->is_constant()) fair_grad = parameter_gradient(tape, *term, first, out.gradient.size());
  }
  out.total = (1.0 - lambda) * out.natural + lambda * out.fairness;
  for (std::size_t i = 0; i < out.gradient.size(); ++i) {
    out.gradient[i] = (1.0 - lambda) * out.gradient[i] + lambda * fair_grad[i];
  }
  return out;
}

TrainingResult train(const Dataset& train_ds, const Dataset& test_ds, const FairnessProperty& prop,
                     const DatasetSchema& schema, const TrainingConfig& cfg, const TrainingOptions& options) {
  cfg.validate();
  prop.validate(schema);
  if (train_ds.empty()) throw InputError("training set is empty");
  const std::size_t n_in = schema.column_count();
  for (const auto& row : train_ds.rows) {
    if (row.size() != n_in) throw InputError("training row width does not match the schema");
  }

  std::vector<std::size_t> dims{n_in};
  dims.insert(dims.end(), cfg.architecture.begin(), cfg.architecture.end());
  dims.push_back(1);
  TrainingResult result{MLPNetwork::init(dims, cfg.seed), {}};
  auto& net = result.net;
  AdamState adam = AdamState::for_network(net, cfg.learning_rate);

  const auto points = labeled_points(train_ds);
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed ^ 0x5deece66dULL);
  std::vector<LabeledPoint> batch;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Fisher-Yates with the raw generator keeps the order library-independent.
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double natural_sum = 0.0;
    double fairness_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(points[order[i]]);
      const auto loss = composite_loss(net, batch, prop, schema, cfg);
      natural_sum += loss.natural * static_cast<double>(batch.size());
      fairness_sum += loss.fairness;
      ++batches;
      adam_step(adam, net, loss.gradient);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.natural_loss = natural_sum / static_cast<double>(order.size());
    rec.fairness_loss = fairness_sum / static_cast<double>(batches);
    rec.test_acc = test_ds.empty() ? accuracy(net, train_ds) : accuracy(net, test_ds);
    if (options.certify_each_epoch) rec.certified_fairness = certify(net, prop, schema, options.limits).certified_pct;
    result.history.epochs.push_back(rec);
  }
  return result;
}

}  // namespace certifair
