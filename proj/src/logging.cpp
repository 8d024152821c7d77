// SPDX-License-Identifier: Apache-2.0

#include "trajdiff/logging.hpp"

#include <atomic>
#include <iostream>

namespace trajdiff {

namespace {
std::atomic<int> g_level{static_cast<int>(LogLevel::kWarn)};
}

void set_log_level(LogLevel level) { g_level = static_cast<int>(level); }
LogLevel log_level() { return static_cast<LogLevel>(g_level.load()); }

void log_warn(std::string_view msg) {
  if (g_level >= static_cast<int>(LogLevel::kWarn)) std::clog << "[warn] " << msg << '\n';
}

void log_info(std::string_view msg) {
  if (g_level >= static_cast<int>(LogLevel::kInfo)) std::clog << "[info] " << msg << '\n';
}

}  // namespace trajdiff
