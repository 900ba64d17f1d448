#pragma once

#include <filesystem>
#include <string>

#include "certifair/network.hpp"
#include "json.hpp"

namespace certifair {

// {"input_dim": n, "layers": [{"weights": [[...]], "bias": [...], "activation": "relu"|"sigmoid"}]}
nlohmann::json model_to_json(const MLPNetwork& net);
MLPNetwork model_from_json(const nlohmann::json& j);

void save_model(const MLPNetwork& net, const std::filesystem::path& path);
MLPNetwork load_model(const std::filesystem::path& path);

/// Reads and parses a JSON document; ConfigError on missing file or bad syntax.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace certifair
