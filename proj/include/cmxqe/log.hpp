#pragma once

#include <spdlog/spdlog.h>

namespace cmxqe {

/// Shared stderr logger. Level comes from CMXQE_LOG
/// (trace|debug|info|warn|error|off), default info.
spdlog::logger& logger();

}  // namespace cmxqe
