#pragma once

#include <string_view>

namespace mcdet {

enum class LogLevel { quiet = 0, warn = 1, info = 2, debug = 3 };

void set_log_level(LogLevel level);
LogLevel log_level();

void log_warn(std::string_view message);
void log_info(std::string_view message);
void log_debug(std::string_view message);

}  // namespace mcdet
