#include "mcdet/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace mcdet {
namespace {

std::atomic<LogLevel> g_level{LogLevel::warn};
std::mutex g_mutex;

void emit(LogLevel level, std::string_view tag, std::string_view message) {
  if (static_cast<int>(level) > static_cast<int>(g_level.load())) return;
  std::lock_guard lock(g_mutex);
  std::cerr << '[' << tag << "] " << message << '\n';
}

}  // namespace

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level.load(); }

void log_warn(std::string_view message) { emit(LogLevel::warn, "warn", message); }
void log_info(std::string_view message) { emit(LogLevel::info, "info", message); }
void log_debug(std::string_view message) { emit(LogLevel::debug, "debug", message); }

}  // namespace mcdet
