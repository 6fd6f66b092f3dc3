#pragma once

#include <string_view>

namespace lopguard {

/// Routes the default spdlog logger to standard error. Level names follow
/// spdlog ("trace", "debug", "info", "warn", "error", "off").
void init_logging(std::string_view level = "info");

}  // namespace lopguard
