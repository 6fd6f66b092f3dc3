#include "lopguard/logging.hpp"

#include <string>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

namespace lopguard {

void init_logging(std::string_view level) {
  auto logger = spdlog::get("lopguard");
  if (!logger) logger = spdlog::stderr_logger_mt("lopguard");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(std::string(level)));
}

}  // namespace lopguard
