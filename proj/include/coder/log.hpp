#pragma once

#include <functional>
#include <string>

namespace coder {

using WarningSink = std::function<void(const std::string&)>;

// Replaces the process-wide warning sink (default: stderr). Returns the
// previous sink so tests can restore it.
WarningSink set_warning_sink(WarningSink sink);

void warn(const std::string& message);

}  // namespace coder
