#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "attnaudit/autodiff.hpp"

namespace attnaudit {

inline constexpr int kCheckpointFormatVersion = 1;

/// {"format_version": 1, "parameters": {name: {"shape": [...], "values": [...]}}}
/// Values are written with round-trip precision, so a reload is bit-exact.
nlohmann::json parameters_to_json(const ParameterStore& store);
ParameterStore parameters_from_json(const nlohmann::json& j);

std::string serialize_parameters(const ParameterStore& store);
ParameterStore deserialize_parameters(std::string_view text);

}  // namespace attnaudit
