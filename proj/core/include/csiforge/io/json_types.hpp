/**
 * @file json_types.hpp
 * @brief JSON conversions for scenario types (nested form, used for hashing
 * and dataset sidecars).
 */
#pragma once

#include "csiforge/channel.hpp"

#include <json.hpp>

namespace csiforge::channel {

void to_json(nlohmann::json& j, const Cluster& c);
void from_json(const nlohmann::json& j, Cluster& c);
void to_json(nlohmann::json& j, const ScenarioConfig& s);
void from_json(const nlohmann::json& j, ScenarioConfig& s);

}  // namespace csiforge::channel
