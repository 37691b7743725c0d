#pragma once

#include <functional>
#include <string>

namespace tcl {

// Non-fatal diagnostics (stratification fallback, empty split sides, ...).
// Default sink writes "warning: <msg>" to stderr.
void warn(const std::string& msg);

using WarningSink = std::function<void(const std::string&)>;
// Returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace tcl
