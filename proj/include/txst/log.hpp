#pragma once

#include <string_view>

#include <nlohmann/json.hpp>

namespace txst {

/// Writes one JSON object per line to stderr: {"level", "event", ...fields}.
void log_event(std::string_view level, std::string_view event, const nlohmann::json& fields = {});

/// Silences log_event below "error" (tests use this).
void set_quiet_logging(bool quiet);

}  // namespace txst
