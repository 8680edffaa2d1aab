#include "mjscc/macs.hpp"

#include <utility>

namespace mjscc {

std::uint64_t MacCounter::total() const {
  std::uint64_t sum = 0;
  for (const auto& [name, count] : per_module) sum += count;
  return sum;
}

namespace macs {

namespace {
thread_local MacCounter* g_active = nullptr;
thread_local std::string g_label = "other";
}  // namespace

Recording::Recording(MacCounter& counter) : previous_(g_active) { g_active = &counter; }
Recording::~Recording() { g_active = previous_; }

Scope::Scope(std::string label) : previous_(std::exchange(g_label, std::move(label))) {}
Scope::~Scope() { g_label = std::move(previous_); }

void tally(std::uint64_t count) {
  if (g_active != nullptr) g_active->add(g_label, count);
}

}  // namespace macs
}  // namespace mjscc
