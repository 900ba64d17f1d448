#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "certifair/network.hpp"
#include "json.hpp"

namespace certifair {

enum class FeatureKind { numerical, categorical };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::numerical;
  double raw_min = 0.0;             // numerical only
  double raw_max = 1.0;             // numerical only
  std::vector<std::string> levels;  // categorical only, in one-hot order
};

struct LabelSpec {
  std::string name;
  std::string positive_value;
};

/// Feature description plus the derived scaled/one-hot column layout.
class DatasetSchema {
 public:
  DatasetSchema() = default;
  /// Validates: unique names, categorical features have >= 2 levels, the
  /// sensitive feature exists and is categorical, raw_min < raw_max.
  DatasetSchema(std::vector<FeatureSpec> features, std::string sensitive_feature, LabelSpec label);

  static DatasetSchema from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  const std::vector<FeatureSpec>& features() const { return features_; }
  const std::string& sensitive_feature() const { return sensitive_; }
  const LabelSpec& label() const { return label_; }

  std::size_t column_count() const { return column_count_; }
  /// First column of feature `index`; categorical features span `levels.size()` columns.
  std::size_t column_of(std::size_t feature_index) const { return columns_[feature_index]; }
  std::size_t width_of(std::size_t feature_index) const;
  std::size_t feature_index(const std::string& name) const;
  std::size_t sensitive_index() const { return sensitive_index_; }
  /// Indices of numerical features in schema order.
  const std::vector<std::size_t>& numerical_features() const { return numerical_; }
  /// Indices of categorical features other than the sensitive one, schema order.
  const std::vector<std::size_t>& nonsensitive_categoricals() const { return nonsensitive_cat_; }
  /// feature name -> [first column, one past last column)
  std::map<std::string, std::pair<std::size_t, std::size_t>> column_map() const;

 private:
  std::vector<FeatureSpec> features_;
  std::string sensitive_;
  LabelSpec label_;
  std::vector<std::size_t> columns_;
  std::vector<std::size_t> numerical_;
  std::vector<std::size_t> nonsensitive_cat_;
  std::size_t sensitive_index_ = 0;
  std::size_t column_count_ = 0;
};

DatasetSchema load_schema(const std::filesystem::path& path);

struct Dataset {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t dropped_rows = 0;       // missing/unparseable cells
  std::size_t unknown_level_rows = 0;  // categorical values not in the schema

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
};

/// Parses RFC-4180 CSV text into records (quoted fields, doubled quotes, CRLF).
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

/// Scales and encodes raw records; the first record must be the header.
Dataset preprocess(const std::vector<std::vector<std::string>>& records, const DatasetSchema& schema);

Dataset load_and_preprocess(const std::filesystem::path& csv_path, const DatasetSchema& schema);

/// Encodes one raw record (feature name -> raw cell); nullopt if unusable.
std::optional<std::vector<double>> encode_row(const std::map<std::string, std::string>& cells,
                                              const DatasetSchema& schema);

/// Seeded shuffle, then the first round(train_fraction * n) rows go to train.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed);

inline constexpr double kDefaultTrainFraction = 0.7;

double positivity_rate(const MLPNetwork& net, const Dataset& ds);
double label_positivity(const Dataset& ds);
double accuracy(const MLPNetwork& net, const Dataset& ds);

std::vector<LabeledPoint> labeled_points(const Dataset& ds);

}  // namespace certifair
