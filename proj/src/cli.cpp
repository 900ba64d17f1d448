#include "certifair/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "certifair/dataset.hpp"
#include "certifair/errors.hpp"
#include "certifair/model_io.hpp"
#include "certifair/property.hpp"
#include "certifair/training.hpp"
#include "certifair/verifier.hpp"

namespace certifair::cli {

namespace {

using nlohmann::json;

// CERTIFAIR_SEED, when set, replaces every configured seed.
std::optional<std::uint64_t> seed_override() {
  const char* env = std::getenv("CERTIFAIR_SEED");
  if (env == nullptr || *env == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("CERTIFAIR_SEED is not an unsigned integer: ") + env);
  }
}

struct TrainArgs {
  std::string data, schema, property, config, out_model, history;
  bool certify_each_epoch = false;
  std::size_t max_nodes = VerifierLimits{}.max_nodes;
  double timeout_secs = VerifierLimits{}.timeout_secs;
};

struct CertifyArgs {
  std::string model, schema, property, report, data;
  std::size_t max_nodes = VerifierLimits{}.max_nodes;
  double timeout_secs = VerifierLimits{}.timeout_secs;
  std::size_t jobs = 1;
  std::size_t partition_cap = kDefaultPartitionCap;
  std::uint64_t seed = 0;
  double train_fraction = kDefaultTrainFraction;
};

struct LocalArgs {
  std::string model, schema, property, points, data, report;
  bool pin_sensitive = false;
  std::size_t max_points = 0;
  std::size_t max_nodes = VerifierLimits{}.max_nodes;
  double timeout_secs = VerifierLimits{}.timeout_secs;
  std::uint64_t seed = 0;
  double train_fraction = kDefaultTrainFraction;
};

struct EvalArgs {
  std::string model, data, schema;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const auto schema = load_schema(a.schema);
  const auto prop = load_property(a.property, schema);
  auto cfg = TrainingConfig::from_json(read_json_file(a.config));
  if (const auto s = seed_override()) cfg.seed = *s;
  const auto ds = load_and_preprocess(a.data, schema);
  if (ds.dropped_rows + ds.unknown_level_rows > 0) {
    err << "dropped " << ds.dropped_rows << " incomplete rows and " << ds.unknown_level_rows
        << " rows with unknown categorical levels\n";
  }
  const auto [train_ds, test_ds] = split(ds, cfg.train_fraction, cfg.seed);
  TrainingOptions opts;
  opts.certify_each_epoch = a.certify_each_epoch;
  opts.limits = {a.max_nodes, a.timeout_secs};
  const auto result = train(train_ds, test_ds, prop, schema, cfg, opts);
  save_model(result.net, a.out_model);
  if (!a.history.empty()) write_text_file(a.history, result.history.to_csv());
  json summary{{"test_accuracy_pct", accuracy(result.net, test_ds)},
               {"positivity_rate_pct", positivity_rate(result.net, test_ds)},
               {"epochs", cfg.epochs},
               {"seed", cfg.seed}};
  out << summary.dump() << '\n';
  return kExitOk;
}

int cmd_certify(const CertifyArgs& a, std::ostream& out, std::ostream& err) {
  const auto schema = load_schema(a.schema);
  const auto prop = load_property(a.property, schema);
  const auto net = load_model(a.model);
  if (net.input_dim() != schema.column_count()) {
    throw ConfigError("model expects " + std::to_string(net.input_dim()) + " inputs, schema encodes " +
                      std::to_string(schema.column_count()));
  }
  const VerifierLimits limits{a.max_nodes, a.timeout_secs};
  auto report = certify(net, prop, schema, limits, a.jobs, a.partition_cap);
  if (!a.data.empty()) {
    const auto ds = load_and_preprocess(a.data, schema);
    const std::uint64_t seed = seed_override().value_or(a.seed);
    const auto [train_ds, test_ds] = split(ds, a.train_fraction, seed);
    report.accuracy_pct = accuracy(net, test_ds);
    report.positivity_pct = positivity_rate(net, test_ds);
  }
  const auto j = report.to_json(schema);
  if (!a.report.empty()) write_text_file(a.report, j.dump(2) + "\n");
  out << json{{"certified_global_fairness_pct", report.certified_pct},
              {"partitions", report.partitions.size()},
              {"fair", report.fair},
              {"unfair", report.unfair},
              {"resource_limit", report.resource_limited}}
             .dump()
      << '\n';
  if (report.unfair > 0) {
    err << report.unfair << " partition(s) have counterexamples\n";
    return kExitUnfair;
  }
  if (report.resource_limited > 0) {
    err << report.resource_limited << " partition(s) hit the node or time limit\n";
    return kExitResource;
  }
  return kExitOk;
}

// Encoded points from a CSV with a header naming the schema features.  Rows
// that cannot be encoded come back as nullopt.
std::vector<std::optional<std::vector<double>>> read_points(const std::string& path, const DatasetSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto records = parse_csv(ss.str());
  if (records.size() < 2) throw InputError("points file " + path + " has no data rows");
  const auto& header = records.front();
  for (const auto& f : schema.features()) {
    if (std::find(header.begin(), header.end(), f.name) == header.end()) {
      throw ConfigError("points file is missing column '" + f.name + "'");
    }
  }
  std::vector<std::optional<std::vector<double>>> pts;
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != header.size()) {
      pts.emplace_back();
      continue;
    }
    std::map<std::string, std::string> cells;
    for (std::size_t c = 0; c < header.size(); ++c) cells[header[c]] = records[r][c];
    pts.push_back(encode_row(cells, schema));
  }
  return pts;
}

int cmd_verify_local(const LocalArgs& a, std::ostream& out, std::ostream& err) {
  const auto schema = load_schema(a.schema);
  const auto prop = load_property(a.property, schema);
  const auto net = load_model(a.model);
  if (net.input_dim() != schema.column_count()) {
    throw ConfigError("model expects " + std::to_string(net.input_dim()) + " inputs, schema encodes " +
                      std::to_string(schema.column_count()));
  }
  std::vector<std::optional<std::vector<double>>> points;
  if (!a.points.empty()) {
    points = read_points(a.points, schema);
  } else if (!a.data.empty()) {
    const auto ds = load_and_preprocess(a.data, schema);
    const std::uint64_t seed = seed_override().value_or(a.seed);
    const auto parts = split(ds, a.train_fraction, seed);
    for (const auto& row : parts.second.rows) points.emplace_back(row);
  } else {
    throw ConfigError("verify-local needs --points or --data");
  }
  if (a.max_points > 0 && points.size() > a.max_points) points.resize(a.max_points);
  if (points.empty()) throw InputError("no points to verify");

  const VerifierLimits limits{a.max_nodes, a.timeout_secs};
  std::size_t fair = 0, unfair = 0, limited = 0, skipped = 0;
  json entries = json::array();
  for (std::size_t i = 0; i < points.size(); ++i) {
    json e{{"index", i}};
    if (!points[i] || !in_domain(*points[i], prop, schema)) {
      ++skipped;
      e["verdict"] = "skipped";
      entries.push_back(std::move(e));
      continue;
    }
    const auto v = verify_local(net, *points[i], prop, schema, limits, a.pin_sensitive);
    e["verdict"] = to_string(v.kind);
    e["nodes"] = v.nodes_visited;
    e["millis"] = v.millis;
    if (v.counterexample) e["counterexample"] = v.counterexample->to_json();
    switch (v.kind) {
      case VerdictKind::fair: ++fair; break;
      case VerdictKind::unfair: ++unfair; break;
      case VerdictKind::resource_limit: ++limited; break;
    }
    entries.push_back(std::move(e));
  }
  const std::size_t checked = fair + unfair + limited;
  const double pct = checked == 0 ? 0.0 : 100.0 * static_cast<double>(fair) / static_cast<double>(checked);
  json summary{{"local_fairness_pct", pct}, {"checked", checked}, {"fair", fair},
               {"unfair", unfair},          {"resource_limit", limited}, {"skipped", skipped}};
  if (!a.report.empty()) {
    json report = summary;
    report["points"] = std::move(entries);
    report["pin_sensitive"] = a.pin_sensitive;
    report["property"] = prop.to_json();
    report["limits"] = limits.to_json();
    write_text_file(a.report, report.dump(2) + "\n");
  }
  out << summary.dump() << '\n';
  if (skipped > 0) err << skipped << " point(s) skipped (outside the property domain or not encodable)\n";
  if (checked == 0) throw InputError("every point was skipped");
  if (unfair > 0) return kExitUnfair;
  if (limited > 0) return kExitResource;
  return kExitOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream&) {
  const auto schema = load_schema(a.schema);
  const auto net = load_model(a.model);
  const auto ds = load_and_preprocess(a.data, schema);
  if (net.input_dim() != schema.column_count()) {
    throw ConfigError("model expects " + std::to_string(net.input_dim()) + " inputs, schema encodes " +
                      std::to_string(schema.column_count()));
  }
  out << json{{"accuracy_pct", accuracy(net, ds)},
              {"positivity_rate_pct", positivity_rate(net, ds)},
              {"rows", ds.size()}}
             .dump()
      << '\n';
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fairness-regularized training and verification of small ReLU classifiers"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a classifier and write the model and history");
  train_cmd->add_option("--data", ta.data, "CSV dataset")->required();
  train_cmd->add_option("--schema", ta.schema, "dataset schema JSON")->required();
  train_cmd->add_option("--property", ta.property, "fairness property JSON")->required();
  train_cmd->add_option("--config", ta.config, "training config JSON")->required();
  train_cmd->add_option("--out-model", ta.out_model, "model output path")->required();
  train_cmd->add_option("--history", ta.history, "per-epoch CSV output path");
  train_cmd->add_flag("--certify-each-epoch", ta.certify_each_epoch, "certify after every epoch");
  train_cmd->add_option("--max-nodes", ta.max_nodes, "node limit per partition (per-epoch certification)");
  train_cmd->add_option("--timeout-secs", ta.timeout_secs, "time limit per partition (per-epoch certification)");

  CertifyArgs ca;
  auto* certify_cmd = app.add_subcommand("certify", "verify every partition of the property");
  certify_cmd->add_option("--model", ca.model)->required();
  certify_cmd->add_option("--schema", ca.schema)->required();
  certify_cmd->add_option("--property", ca.property)->required();
  certify_cmd->add_option("--report", ca.report, "report JSON output path");
  certify_cmd->add_option("--max-nodes", ca.max_nodes);
  certify_cmd->add_option("--timeout-secs", ca.timeout_secs);
  certify_cmd->add_option("--jobs", ca.jobs)->check(CLI::PositiveNumber);
  certify_cmd->add_option("--partition-cap", ca.partition_cap);
  certify_cmd->add_option("--data", ca.data, "CSV dataset; the test split is used for accuracy/positivity");
  certify_cmd->add_option("--seed", ca.seed, "split seed for --data");
  certify_cmd->add_option("--train-fraction", ca.train_fraction);

  LocalArgs la;
  auto* local_cmd = app.add_subcommand("verify-local", "verify fairness around individual points");
  local_cmd->add_option("--model", la.model)->required();
  local_cmd->add_option("--schema", la.schema)->required();
  local_cmd->add_option("--property", la.property)->required();
  local_cmd->add_option("--points", la.points, "CSV of raw points with a header row");
  local_cmd->add_option("--data", la.data, "CSV dataset; its test split supplies the points");
  local_cmd->add_option("--report", la.report);
  local_cmd->add_flag("--pin-sensitive", la.pin_sensitive, "keep the point's own sensitive level");
  local_cmd->add_option("--max-points", la.max_points, "verify at most this many points (0 = all)");
  local_cmd->add_option("--max-nodes", la.max_nodes);
  local_cmd->add_option("--timeout-secs", la.timeout_secs);
  local_cmd->add_option("--seed", la.seed, "split seed for --data");
  local_cmd->add_option("--train-fraction", la.train_fraction);

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "print accuracy and positivity rate");
  eval_cmd->add_option("--model", ea.model)->required();
  eval_cmd->add_option("--data", ea.data)->required();
  eval_cmd->add_option("--schema", ea.schema)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(ta, out, err);
    if (certify_cmd->parsed()) return cmd_certify(ca, out, err);
    if (local_cmd->parsed()) return cmd_verify_local(la, out, err);
    if (eval_cmd->parsed()) return cmd_eval(ea, out, err);
  } catch (const std::exception& e) {
    // Configuration, input and partition-cap errors all map to the usage code.
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace certifair::cli
