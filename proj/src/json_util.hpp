#pragma once

// Internal bridge between the config/io structs and their JSON form. Kept
// out of the public headers so the vendored parser stays an implementation
// detail.

#include <string>

#include "dlvae/config.hpp"
#include "dlvae/errors.hpp"
#include "json.hpp"

namespace dlvae::detail {

using nlohmann::json;

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed);

json model_config_to_json(const ModelConfig& m);
ModelConfig model_config_from_json(const json& j, const std::string& path);

json experiment_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_from_json(const json& j);

}  // namespace dlvae::detail
