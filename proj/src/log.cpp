#include "tcl/log.hpp"

#include <iostream>
#include <mutex>

namespace tcl {
namespace {

std::mutex g_mu;
WarningSink g_sink = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };

}  // namespace

void warn(const std::string& msg) {
  std::lock_guard lock(g_mu);
  if (g_sink) g_sink(msg);
}

WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(g_mu);
  std::swap(g_sink, sink);
  return sink;
}

}  // namespace tcl
