#include "certifair/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "certifair/errors.hpp"
#include "certifair/model_io.hpp"

namespace certifair {

using nlohmann::json;

DatasetSchema::DatasetSchema(std::vector<FeatureSpec> features, std::string sensitive_feature,
                             LabelSpec label)
    : features_(std::move(features)), sensitive_(std::move(sensitive_feature)), label_(std::move(label)) {
  if (features_.empty()) throw ConfigError("schema has no features");
  std::set<std::string> names;
  bool found_sensitive = false;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const auto& f = features_[i];
    if (f.name.empty()) throw ConfigError("schema feature " + std::to_string(i) + " has an empty name");
    if (!names.insert(f.name).second) throw ConfigError("duplicate feature name '" + f.name + "'");
    columns_.push_back(column_count_);
    if (f.kind == FeatureKind::numerical) {
      if (!(std::isfinite(f.raw_min) && std::isfinite(f.raw_max))) {
        throw ConfigError("feature '" + f.name + "' has a non-finite raw range");
      }
      if (f.raw_min >= f.raw_max) {
        throw ConfigError("feature '" + f.name + "' needs raw_min < raw_max");
      }
      numerical_.push_back(i);
      column_count_ += 1;
    } else {
      if (f.levels.size() < 2) throw ConfigError("categorical feature '" + f.name + "' needs >= 2 levels");
      std::set<std::string> lv(f.levels.begin(), f.levels.end());
      if (lv.size() != f.levels.size()) throw ConfigError("feature '" + f.name + "' has duplicate levels");
      if (f.name == sensitive_) {
        found_sensitive = true;
        sensitive_index_ = i;
      } else {
        nonsensitive_cat_.push_back(i);
      }
      column_count_ += f.levels.size();
    }
  }
  if (!found_sensitive) {
    if (names.count(sensitive_)) throw ConfigError("sensitive feature '" + sensitive_ + "' must be categorical");
    throw ConfigError("sensitive feature '" + sensitive_ + "' is not in the schema");
  }
  if (label_.name.empty()) throw ConfigError("schema label name is empty");
  if (names.count(label_.name)) throw ConfigError("label '" + label_.name + "' is also a feature");
}

std::size_t DatasetSchema::width_of(std::size_t feature_index) const {
  const auto& f = features_.at(feature_index);
  return f.kind == FeatureKind::numerical ? 1 : f.levels.size();
}

std::size_t DatasetSchema::feature_index(const std::string& name) const {
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (features_[i].name == name) return i;
  }
  throw ConfigError("unknown feature '" + name + "'");
}

std::map<std::string, std::pair<std::size_t, std::size_t>> DatasetSchema::column_map() const {
  std::map<std::string, std::pair<std::size_t, std::size_t>> m;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    m[features_[i].name] = {columns_[i], columns_[i] + width_of(i)};
  }
  return m;
}

DatasetSchema DatasetSchema::from_json(const json& j) {
  try {
    std::vector<FeatureSpec> features;
    for (const auto& jf : j.at("features")) {
      FeatureSpec f;
      f.name = jf.at("name").get<std::string>();
      const auto kind = jf.at("kind").get<std::string>();
      if (kind == "numerical") {
        f.kind = FeatureKind::numerical;
        f.raw_min = jf.at("raw_min").get<double>();
        f.raw_max = jf.at("raw_max").get<double>();
      } else if (kind == "categorical") {
        f.kind = FeatureKind::categorical;
        f.levels = jf.at("levels").get<std::vector<std::string>>();
      } else {
        throw ConfigError("feature '" + f.name + "': unknown kind '" + kind + "'");
      }
      features.push_back(std::move(f));
    }
    LabelSpec label;
    label.name = j.at("label").at("name").get<std::string>();
    label.positive_value = j.at("label").at("positive_value").get<std::string>();
    return DatasetSchema(std::move(features), j.at("sensitive_feature").get<std::string>(), std::move(label));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("schema: ") + e.what());
  }
}

json DatasetSchema::to_json() const {
  json fs = json::array();
  for (const auto& f : features_) {
    if (f.kind == FeatureKind::numerical) {
      fs.push_back({{"name", f.name}, {"kind", "numerical"}, {"raw_min", f.raw_min}, {"raw_max", f.raw_max}});
    } else {
      fs.push_back({{"name", f.name}, {"kind", "categorical"}, {"levels", f.levels}});
    }
  }
  return {{"features", fs},
          {"sensitive_feature", sensitive_},
          {"label", {{"name", label_.name}, {"positive_value", label_.positive_value}}}};
}

DatasetSchema load_schema(const std::filesystem::path& path) {
  return DatasetSchema::from_json(read_json_file(path));
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    // A lone empty field is a blank line.
    if (!(record.size() == 1 && record[0].empty() && !field_started)) records.push_back(std::move(record));
    record.clear();
    field_started = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(ch);
        field_started = true;
    }
  }
  if (in_quotes) throw InputError("CSV ends inside a quoted field");
  if (!field.empty() || !record.empty() || field_started) end_record();
  return records;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& cell) { return cell.empty() || cell == "?" || cell == "NA"; }

std::optional<double> parse_number(const std::string& cell) {
  if (is_missing(cell)) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

enum class RowStatus { ok, missing, unknown_level };

RowStatus encode_into(const std::map<std::string, std::string>& cells, const DatasetSchema& schema,
                      std::vector<double>& out) {
  out.assign(schema.column_count(), 0.0);
  const auto& fs = schema.features();
  for (std::size_t i = 0; i < fs.size(); ++i) {
    const auto& f = fs[i];
    const auto it = cells.find(f.name);
    if (it == cells.end()) return RowStatus::missing;
    const std::string cell = trim(it->second);
    if (f.kind == FeatureKind::numerical) {
      const auto v = parse_number(cell);
      if (!v) return RowStatus::missing;
      out[schema.column_of(i)] = std::clamp((*v - f.raw_min) / (f.raw_max - f.raw_min), 0.0, 1.0);
    } else {
      if (is_missing(cell)) return RowStatus::missing;
      const auto lv = std::find(f.levels.begin(), f.levels.end(), cell);
      if (lv == f.levels.end()) return RowStatus::unknown_level;
      out[schema.column_of(i) + static_cast<std::size_t>(lv - f.levels.begin())] = 1.0;
    }
  }
  return RowStatus::ok;
}

}  // namespace

std::optional<std::vector<double>> encode_row(const std::map<std::string, std::string>& cells,
                                              const DatasetSchema& schema) {
  std::vector<double> out;
  if (encode_into(cells, schema, out) != RowStatus::ok) return std::nullopt;
  return out;
}

Dataset preprocess(const std::vector<std::vector<std::string>>& records, const DatasetSchema& schema) {
  if (records.empty()) throw ConfigError("CSV has no header row");
  const auto& header = records.front();
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[trim(header[i])] = i;
  for (const auto& f : schema.features()) {
    if (!col.count(f.name)) throw ConfigError("CSV is missing column '" + f.name + "'");
  }
  if (!col.count(schema.label().name)) {
    throw ConfigError("CSV is missing label column '" + schema.label().name + "'");
  }

  Dataset ds;
  std::map<std::string, std::string> cells;
  std::vector<double> row;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() != header.size()) {
      ++ds.dropped_rows;
      continue;
    }
    cells.clear();
    for (const auto& [name, idx] : col) cells[name] = rec[idx];
    const std::string label_cell = trim(rec[col.at(schema.label().name)]);
    if (is_missing(label_cell)) {
      ++ds.dropped_rows;
      continue;
    }
    const auto status = encode_into(cells, schema, row);
    if (status == RowStatus::missing) {
      ++ds.dropped_rows;
      continue;
    }
    if (status == RowStatus::unknown_level) {
      ++ds.unknown_level_rows;
      continue;
    }
    ds.rows.push_back(row);
    ds.labels.push_back(label_cell == schema.label().positive_value ? 1 : 0);
  }
  return ds;
}

Dataset load_and_preprocess(const std::filesystem::path& csv_path, const DatasetSchema& schema) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + csv_path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return preprocess(parse_csv(buf.str()), schema);
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InputError("train_fraction must lie strictly between 0 and 1");
  }
  if (ds.size() < 2) throw InputError("cannot split a dataset with fewer than 2 rows");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit index draw so the permutation does not
  // depend on the standard library's shuffle implementation.
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ds.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, ds.size() - 1);
  Dataset train;
  Dataset test;
  for (std::size_t k = 0; k < order.size(); ++k) {
    Dataset& dst = k < n_train ? train : test;
    dst.rows.push_back(ds.rows[order[k]]);
    dst.labels.push_back(ds.labels[order[k]]);
  }
  return {std::move(train), std::move(test)};
}

double positivity_rate(const MLPNetwork& net, const Dataset& ds) {
  if (ds.empty()) throw InputError("positivity_rate of an empty dataset");
  std::size_t pos = 0;
  for (const auto& r : ds.rows) pos += static_cast<std::size_t>(predict(net, r));
  return 100.0 * static_cast<double>(pos) / static_cast<double>(ds.size());
}

double label_positivity(const Dataset& ds) {
  if (ds.empty()) throw InputError("label_positivity of an empty dataset");
  const auto pos = std::count(ds.labels.begin(), ds.labels.end(), 1);
  return 100.0 * static_cast<double>(pos) / static_cast<double>(ds.size());
}

double accuracy(const MLPNetwork& net, const Dataset& ds) {
  if (ds.empty()) throw InputError("accuracy of an empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    correct += predict(net, ds.rows[i]) == ds.labels[i] ? 1u : 0u;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(ds.size());
}

std::vector<LabeledPoint> labeled_points(const Dataset& ds) {
  std::vector<LabeledPoint> pts;
  pts.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) pts.push_back({ds.rows[i], ds.labels[i]});
  return pts;
}

}  // namespace certifair
