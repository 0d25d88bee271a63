#include "msm/core/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

#include <json.hpp>

namespace msm::log {
namespace {

std::atomic<bool> g_json{false};
std::atomic<int> g_min_level{static_cast<int>(Level::info)};
std::atomic<std::size_t> g_warnings{0};
std::mutex g_mutex;

const char* name(Level level) {
  switch (level) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warn";
    case Level::error: return "error";
  }
  return "info";
}

}  // namespace

void set_json(bool enabled) { g_json = enabled; }
void set_min_level(Level level) { g_min_level = static_cast<int>(level); }

void write(Level level, std::string_view msg) {
  if (level == Level::warn) ++g_warnings;
  if (static_cast<int>(level) < g_min_level) return;
  std::lock_guard lock(g_mutex);
  if (g_json) {
    nlohmann::json rec{{"level", name(level)}, {"msg", std::string(msg)}};
    std::cerr << rec.dump() << '\n';
  } else {
    std::cerr << '[' << name(level) << "] " << msg << '\n';
  }
}

std::size_t warning_count() { return g_warnings; }

}  // namespace msm::log
