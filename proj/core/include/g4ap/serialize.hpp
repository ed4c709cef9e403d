#pragma once

#include <json.hpp>

#include "g4ap/model.hpp"

namespace g4ap {

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json audit_to_json(const std::vector<AuditInterval>& audit);
std::vector<AuditInterval> audit_from_json(const nlohmann::json& j);

const char* dtype_name(DType t);
DType dtype_from_name(const std::string& name);
const char* gelu_name(GeluKind k);
GeluKind gelu_from_name(const std::string& name);

}  // namespace g4ap
