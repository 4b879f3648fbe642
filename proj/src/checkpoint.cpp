#include "attnaudit/checkpoint.hpp"

#include "attnaudit/util.hpp"

namespace attnaudit {

using json = nlohmann::json;

json parameters_to_json(const ParameterStore& store) {
  json params = json::object();
  for (const auto& [name, t] : store.values()) {
    params[name] = {{"shape", t.shape().to_vector()}, {"values", t.storage()}};
  }
  return {{"format_version", kCheckpointFormatVersion}, {"parameters", params}};
}

ParameterStore parameters_from_json(const json& j) {
  if (!j.is_object() || !j.contains("format_version"))
    throw ValidationError("parameter checkpoint lacks format_version");
  if (j["format_version"] != kCheckpointFormatVersion)
    throw ValidationError("unsupported checkpoint format_version " +
                          j["format_version"].dump());
  if (!j.contains("parameters") || !j["parameters"].is_object())
    throw ValidationError("parameter checkpoint lacks a parameters object");
  ParameterStore store;
  for (auto it = j["parameters"].begin(); it != j["parameters"].end(); ++it) {
    const auto& entry = it.value();
    if (!entry.contains("shape") || !entry.contains("values"))
      throw ValidationError("parameter '" + it.key() + "' lacks shape or values");
    try {
      store.add(it.key(), Tensor(Shape(entry["shape"].get<std::vector<std::size_t>>()),
                                 entry["values"].get<std::vector<double>>()));
    } catch (const json::exception& e) {
      throw ValidationError("parameter '" + it.key() + "': " + e.what());
    } catch (const std::invalid_argument& e) {
      throw ValidationError("parameter '" + it.key() + "': " + e.what());
    }
  }
  return store;
}

std::string serialize_parameters(const ParameterStore& store) {
  return parameters_to_json(store).dump();
}

ParameterStore deserialize_parameters(std::string_view text) {
  try {
    return parameters_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("checkpoint json: ") + e.what());
  }
}

}  // namespace attnaudit
