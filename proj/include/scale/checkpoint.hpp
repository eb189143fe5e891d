#pragma once

#include "scale/model.hpp"
#include "scale/optimizer.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace scale {

// Binary container: an 8-byte magic, a little-endian u64 header length, a JSON
// header (model config, vocabulary, step, free-form metadata, tensor table)
// and then every tensor as raw little-endian doubles in table order.
struct Checkpoint {
    ModelParams params;
    std::vector<std::string> vocab_tokens;
    std::int64_t step = 0;
    nlohmann::json meta = nlohmann::json::object();
    std::optional<Adam> optimizer;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

} // namespace scale
