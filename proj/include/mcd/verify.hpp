#pragma once
// Self-contained verification suites: finite-difference gradient checks for
// every differentiable operation, oracle comparisons against the independent
// reference implementations, model construction invariants, and container
// format round-trips. The CLI exposes these via the verify subcommand.

#include <filesystem>
#include <string>
#include <vector>

namespace mcd::verify {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<CheckResult> run_gradcheck_suite(int instances_per_op = 20, uint64_t seed = 20240501);
std::vector<CheckResult> run_oracle_suite(uint64_t seed = 77001);
std::vector<CheckResult> run_model_suite(uint64_t seed = 31337);
std::vector<CheckResult> run_format_suite(const std::filesystem::path& tmp_dir, uint64_t seed = 5150);

// prints one line per check; returns the number of failures
int report(const std::vector<CheckResult>& results);

}  // namespace mcd::verify
