#pragma once

// JSON mapping for configs and normalizers shared by checkpoints and run directories.

#include <json.hpp>

#include "engage/features.hpp"
#include "engage/model.hpp"

namespace engage::detail {

nlohmann::json to_json(const models::ModelConfig& config);
models::ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const features::Normalizer& normalizer);
features::Normalizer normalizer_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);

std::uint64_t fnv1a(const void* data, std::size_t size);

}  // namespace engage::detail
