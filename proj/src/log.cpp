#include "ream/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace ream::log {
namespace {

std::atomic<Level> g_level{Level::warning};
std::mutex g_mu;

void emit(Level lvl, std::string_view tag, std::string_view msg) {
  if (lvl < g_level.load()) return;
  std::lock_guard lock(g_mu);
  std::cerr << "[ream " << tag << "] " << msg << '\n';
}

}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level.load(); }

void info(std::string_view msg) { emit(Level::info, "info", msg); }
void warning(std::string_view msg) { emit(Level::warning, "warn", msg); }

}  // namespace ream::log
