#include "txst/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace txst {
namespace {
std::atomic<bool> g_quiet{false};
std::mutex g_mutex;
}  // namespace

void set_quiet_logging(bool quiet) { g_quiet = quiet; }

void log_event(std::string_view level, std::string_view event, const nlohmann::json& fields) {
  if (g_quiet && level != "error") return;
  nlohmann::json line = {{"level", level}, {"event", event}};
  if (fields.is_object()) {
    for (const auto& [k, v] : fields.items()) line[k] = v;
  }
  std::lock_guard lock(g_mutex);
  std::cerr << line.dump() << '\n';
}

}  // namespace txst
