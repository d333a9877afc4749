#pragma once

#include <string_view>

namespace ebrate {

void set_verbose(bool on);
bool verbose();
/// Writes to stderr when verbose output is enabled.
void log_warning(std::string_view message);

}  // namespace ebrate
