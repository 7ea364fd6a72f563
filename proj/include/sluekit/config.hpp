#pragma once

#include "sluekit/generate.hpp"
#include "sluekit/mel.hpp"
#include "sluekit/model.hpp"
#include "sluekit/trainer.hpp"

#include <json.hpp>

#include <string>

namespace sluekit {

// JSON (de)serialization for the run configs. Parsers are strict: unknown
// keys raise, naming the offending key.
nlohmann::ordered_json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::ordered_json decode_config_to_json(const DecodeConfig& cfg);
DecodeConfig decode_config_from_json(const nlohmann::json& j);

nlohmann::ordered_json stage_config_to_json(const StageConfig& cfg);
StageConfig stage_config_from_json(const nlohmann::json& j, const StageConfig& defaults);

nlohmann::ordered_json curriculum_config_to_json(const CurriculumConfig& cfg);
CurriculumConfig curriculum_config_from_json(const nlohmann::json& j);

void expect_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                 const std::string& where);

}  // namespace sluekit
