#pragma once

#include <string_view>

namespace ream::log {

enum class Level { debug, info, warning, error, off };

void set_level(Level level);
Level level();

void info(std::string_view msg);
void warning(std::string_view msg);

}  // namespace ream::log
