#pragma once

#include <cstddef>
#include <string_view>

namespace scale::log {

// Warnings go to stderr unless silenced; the counter lets tests observe them.
void warn(std::string_view message);
std::size_t warning_count() noexcept;
void set_quiet(bool quiet) noexcept;

} // namespace scale::log
