#include "cmxqe/log.hpp"

#include <cstdlib>
#include <memory>
#include <string_view>

#include <spdlog/sinks/stdout_sinks.h>

namespace cmxqe {

spdlog::logger& logger() {
  static const std::shared_ptr<spdlog::logger> instance = [] {
    auto log = std::make_shared<spdlog::logger>("cmxqe", std::make_shared<spdlog::sinks::stderr_sink_mt>());
    log->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    auto level = spdlog::level::info;
    if (const char* env = std::getenv("CMXQE_LOG")) {
      // from_str maps unknown names to off; only honour off when asked for.
      const auto parsed = spdlog::level::from_str(env);
      if (parsed != spdlog::level::off || std::string_view(env) == "off") level = parsed;
    }
    log->set_level(level);
    return log;
  }();
  return *instance;
}

}  // namespace cmxqe
