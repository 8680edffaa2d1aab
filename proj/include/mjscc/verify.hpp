#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mjscc/gssm.hpp"

// Property suites run by `mjscc verify`. Each suite draws case k from
// Rng(seed).fork(k) and, on failure, reports the first failing case with the
// inputs needed to reproduce it.
namespace mjscc::verify {

using RecoverFn =
    std::function<std::vector<double>(std::span<const double>, const gssm::ScanScheme&)>;

struct Options {
  std::uint64_t seed = 1;
  /// Scan recovery under test; empty means gssm::scan_recover.
  RecoverFn recover;
};

struct SuiteResult {
  std::string name;
  bool passed = true;
  std::size_t cases = 0;
  std::string summary;  // worst deviation seen
  std::string failure;  // first counterexample, empty on success
};

/// oracle, gssm, superposition, receptive-field, roundtrip, channel, gradient.
const std::vector<std::string>& suite_names();

/// `filter` is "all" or one suite name; throws ContractError otherwise.
std::vector<SuiteResult> run(const std::string& filter, const Options& opt);

/// One line, plus the counterexample on following lines when failed.
std::string format_result(const SuiteResult& r);

}  // namespace mjscc::verify
