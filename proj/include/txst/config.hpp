#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace txst {

/// Directory holding prompt templates and the BPE vocabulary. Resolution order:
/// the TXST_ASSETS environment variable, then the compiled-in source tree path.
std::filesystem::path asset_dir();

/// Full default configuration tree. Every key that the trainer, evaluator or
/// service reads has an entry here.
nlohmann::json default_config();

/// Applies a named preset ("artist" or "general") on top of `config`.
void apply_preset(nlohmann::json& config, std::string_view preset);

/// Sets a dotted key such as "loss.weights.clip". The value is parsed as JSON
/// when possible and taken as a plain string otherwise. Unknown keys are rejected.
void apply_override(nlohmann::json& config, std::string_view dotted_key, std::string_view value);

/// Reads a JSON config file and merges it over the defaults.
nlohmann::json load_config(const std::filesystem::path& path);

/// Recursively merges `patch` into `base`; unknown keys are rejected.
void merge_config(nlohmann::json& base, const nlohmann::json& patch, const std::string& where = "");

const nlohmann::json& config_at(const nlohmann::json& config, std::string_view dotted_key);

}  // namespace txst
