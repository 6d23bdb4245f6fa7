/**
 * @file config.hpp
 * @brief Experiment configuration loading.
 *
 * A config file is a flat JSON object. Precedence: built-in defaults, then
 * the file, then `key=value` overrides. Override keys may address nested
 * values with dots (`clusters.0.mean_power_db=-120`); values are parsed as
 * JSON and fall back to plain strings.
 */
#pragma once

#include "csiforge/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace csiforge::io {

/// Every top-level key a config file may contain, sorted.
const std::vector<std::string>& valid_config_keys();

nlohmann::json to_json(const training::ExperimentConfig& cfg);
/// Applies the keys present in `j` on top of `base`; throws ConfigError on
/// unknown keys (listing every valid key) or malformed values.
training::ExperimentConfig from_json(const nlohmann::json& j,
                                     training::ExperimentConfig base = {});

/// Parses config text; parse errors carry line and column.
nlohmann::json parse_config_text(const std::string& text);

/// Applies one "dotted.key=value" override to a flat config object.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Defaults + file (optional, empty path skips it) + overrides, validated.
training::ExperimentConfig load_config(const std::filesystem::path& path,
                                       const std::vector<std::string>& overrides);

/// Writes `resolved_config.json` (pretty, sorted keys) into `dir`.
void echo_config(const training::ExperimentConfig& cfg, const std::filesystem::path& dir);

/// Inverse of codebook::tag().
codebook::CodebookConfig parse_codebook_tag(const std::string& tag);

}  // namespace csiforge::io
