#include "remogen/profiler.hpp"

namespace remogen::prof {

namespace {
thread_local Profiler* g_active = nullptr;
}

double Profiler::seconds(const std::string& component) const {
  auto it = seconds_.find(component);
  return it == seconds_.end() ? 0.0 : it->second;
}

std::int64_t Profiler::count(const std::string& component) const {
  auto it = counts_.find(component);
  return it == counts_.end() ? 0 : it->second;
}

void Profiler::clear() {
  seconds_.clear();
  counts_.clear();
}

Profiler* active() { return g_active; }

Install::Install(Profiler& p) : previous_(g_active) { g_active = &p; }
Install::~Install() { g_active = previous_; }

}  // namespace remogen::prof
