#include "scale/log.hpp"

#include <atomic>
#include <iostream>

namespace scale::log {
namespace {
std::atomic<std::size_t> g_warnings{0};
std::atomic<bool> g_quiet{false};
} // namespace

void warn(std::string_view message) {
    ++g_warnings;
    if (!g_quiet) std::cerr << "warning: " << message << '\n';
}

std::size_t warning_count() noexcept { return g_warnings; }
void set_quiet(bool quiet) noexcept { g_quiet = quiet; }

} // namespace scale::log
