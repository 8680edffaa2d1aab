#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace mjscc {

/// Multiply-accumulate tallies keyed by module label. One multiply plus one add
/// counts as one MAC; elementwise nonlinearities and assignments count zero.
struct MacCounter {
  std::map<std::string, std::uint64_t> per_module;

  void add(const std::string& module, std::uint64_t macs) { per_module[module] += macs; }
  std::uint64_t total() const;
  bool operator==(const MacCounter&) const = default;
};

namespace macs {

/// Routes kernel tallies on this thread into `counter` for the scope lifetime.
class Recording {
 public:
  explicit Recording(MacCounter& counter);
  ~Recording();
  Recording(const Recording&) = delete;
  Recording& operator=(const Recording&) = delete;

 private:
  MacCounter* previous_;
};

/// Labels subsequent tallies on this thread (nested scopes restore the outer
/// label).
class Scope {
 public:
  explicit Scope(std::string label);
  ~Scope();
  Scope(const Scope&) = delete;
  Scope& operator=(const Scope&) = delete;

 private:
  std::string previous_;
};

/// Called by kernels; no-op unless a Recording is active.
void tally(std::uint64_t macs);

}  // namespace macs
}  // namespace mjscc
