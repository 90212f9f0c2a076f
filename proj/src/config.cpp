#include "txst/config.hpp"

#include <cstdlib>
#include <fstream>

#include "txst/errors.hpp"

#ifndef TXST_DEFAULT_ASSET_DIR
#define TXST_DEFAULT_ASSET_DIR "assets"
#endif

namespace txst {

std::filesystem::path asset_dir() {
  if (const char* env = std::getenv("TXST_ASSETS"); env != nullptr && *env != '\0') return env;
  return TXST_DEFAULT_ASSET_DIR;
}

nlohmann::json default_config() {
  using nlohmann::json;
  return json{
      {"clip",
       {{"checkpoint", ""},
        {"preset", "desk"},
        {"seed", 1234},
        {"templates", (asset_dir() / "prompt_templates.txt").string()},
        {"vocab", (asset_dir() / "bpe_simple_vocab_16e6.txt.gz").string()}}},
      {"vgg", {{"checkpoint", ""}, {"seed", 4321}}},
      {"mapper", {{"grid", 16}, {"channels", 512}, {"heads", 1}, {"init_std", 0.02}}},
      {"fusion", {{"order", 2}, {"capacity", 2}, {"channels", 512}, {"power_mode", "elementwise"}}},
      {"loss",
       {{"weights", {{"clip", 100.0}, {"clip_f", 50.0}, {"sim", 10.0}, {"sty", 5.0}, {"con", 1.0}, {"id", 2.0}}},
        {"temperature", 0.1},
        {"contrastive_mode", "nt_xent"},
        {"reduce", "mean"},
        {"source_text", "Photo"}}},
      {"train",
       {{"stage", "style"},
        {"preset", "artist"},
        {"lr", 1e-4},
        {"batch_size", 30},
        {"iterations", 100000},
        {"seed", 0},
        {"grad_clip", 10.0},
        {"checkpoint_every", 1000},
        {"deterministic", true},
        {"init_seed", 7}}},
      {"data",
       {{"manifest", "manifest.json"},
        {"load_size", 512},
        {"patch_size", 256},
        {"resize", "shorter_side"},
        {"skip_list", ""}}},
      {"paths", {{"output_dir", "runs/default"}, {"stage1_checkpoint", ""}}},
      {"service",
       {{"host", "127.0.0.1"},
        {"port", 8080},
        {"max_upload_bytes", 16 * 1024 * 1024},
        {"max_side", 1024},
        {"max_in_flight", 4}}},
  };
}

void apply_preset(nlohmann::json& config, std::string_view preset) {
  if (preset == "artist") {
    config["loss"]["weights"]["clip"] = 100.0;
  } else if (preset == "general") {
    // Smaller directional weight for free-form text prompts.
    config["loss"]["weights"]["clip"] = 10.0;
  } else {
    throw ConfigError("unknown preset '" + std::string(preset) + "'");
  }
  config["train"]["preset"] = std::string(preset);
}

void merge_config(nlohmann::json& base, const nlohmann::json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("config section '" + where + "' must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (base[key].is_object()) {
      merge_config(base[key], value, path);
    } else {
      base[key] = value;
    }
  }
}

void apply_override(nlohmann::json& config, std::string_view dotted_key, std::string_view value) {
  nlohmann::json* node = &config;
  std::string key(dotted_key);
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ConfigError("config key '" + key + "' names a section, not a value");
  if (node->is_string()) {
    *node = std::string(value);
    return;
  }
  auto parsed = nlohmann::json::parse(value, nullptr, false);
  if (parsed.is_discarded() || parsed.type() != node->type()) {
    const bool numeric = parsed.is_number() && node->is_number();
    if (!numeric) throw ConfigError("config key '" + key + "' expects a " + node->type_name());
  }
  *node = std::move(parsed);
}

nlohmann::json load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  auto patch = nlohmann::json::parse(in, nullptr, false);
  if (patch.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  auto config = default_config();
  if (patch.contains("train") && patch["train"].contains("preset")) {
    apply_preset(config, patch["train"]["preset"].get<std::string>());
  }
  merge_config(config, patch);
  return config;
}

const nlohmann::json& config_at(const nlohmann::json& config, std::string_view dotted_key) {
  const nlohmann::json* node = &config;
  std::string key(dotted_key);
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("missing config key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) return *node;
    start = dot + 1;
  }
}

}  // namespace txst
