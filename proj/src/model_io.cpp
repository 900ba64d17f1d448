#include "certifair/model_io.hpp"

#include <fstream>
#include <sstream>

#include "certifair/errors.hpp"

namespace certifair {

using nlohmann::json;

json model_to_json(const MLPNetwork& net) {
  json layers = json::array();
  const auto& ls = net.layers();
  for (std::size_t i = 0; i < ls.size(); ++i) {
    const auto& l = ls[i];
    json rows = json::array();
    for (std::size_t r = 0; r < l.fan_out; ++r) {
      json row = json::array();
      for (std::size_t c = 0; c < l.fan_in; ++c) row.push_back(l.weight(r, c));
      rows.push_back(std::move(row));
    }
    layers.push_back({{"weights", std::move(rows)},
                      {"bias", l.bias},
                      {"activation", i + 1 == ls.size() ? "sigmoid" : "relu"}});
  }
  return {{"input_dim", net.input_dim()}, {"layers", std::move(layers)}};
}

MLPNetwork model_from_json(const json& j) {
  try {
    const auto input_dim = j.at("input_dim").get<std::size_t>();
    const auto& jl = j.at("layers");
    if (!jl.is_array() || jl.empty()) throw ConfigError("model: \"layers\" must be a non-empty array");
    std::vector<DenseLayer<double>> layers;
    std::size_t fan_in = input_dim;
    for (std::size_t i = 0; i < jl.size(); ++i) {
      const auto& entry = jl[i];
      const auto activation = entry.at("activation").get<std::string>();
      const bool last = i + 1 == jl.size();
      if (activation != (last ? "sigmoid" : "relu")) {
        throw ConfigError("model: layer " + std::to_string(i) + " activation must be " +
                          (last ? "\"sigmoid\"" : "\"relu\""));
      }
      DenseLayer<double> layer;
      layer.fan_in = fan_in;
      layer.bias = entry.at("bias").get<std::vector<double>>();
      layer.fan_out = layer.bias.size();
      const auto& rows = entry.at("weights");
      if (rows.size() != layer.fan_out) {
        throw ConfigError("model: layer " + std::to_string(i) + " weight rows do not match bias length");
      }
      for (const auto& row : rows) {
        auto values = row.get<std::vector<double>>();
        if (values.size() != fan_in) {
          throw ConfigError("model: layer " + std::to_string(i) + " row width " +
                            std::to_string(values.size()) + " != fan_in " + std::to_string(fan_in));
        }
        layer.weights.insert(layer.weights.end(), values.begin(), values.end());
      }
      fan_in = layer.fan_out;
      layers.push_back(std::move(layer));
    }
    return MLPNetwork(input_dim, std::move(layers));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

void save_model(const MLPNetwork& net, const std::filesystem::path& path) {
  write_text_file(path, model_to_json(net).dump(2) + "\n");
}

MLPNetwork load_model(const std::filesystem::path& path) {
  return model_from_json(read_json_file(path));
}

}  // namespace certifair
