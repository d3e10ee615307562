#pragma once

// Property suites run by `cstafnet selfcheck`: finite-difference gradient
// checks for every layer and the tiny composite, normalization invariants,
// and a brute-force recount of the classification report.

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "cstafnet/layers.hpp"

namespace cstafnet {

inline constexpr double kGradientTolerance = 1e-4;

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  double worst = 0.0;  // worst relative error or violation magnitude
  std::string detail;
};

struct SelfcheckOptions {
  std::uint64_t seed = 7;
  // Adds an error to one analytic gradient; the gradient suite must fail.
  bool inject_fault = false;
  int normalization_draws = 100;
  int metric_trials = 1000;
};

// Worst relative error between analytic gradients and central differences
// of `loss`, taken over every trainable array in `params`. `grads` must list
// the same arrays in the same order.
double compare_gradients(std::vector<ArrayRef> params, const std::vector<ArrayRef>& grads,
                         const std::function<double()>& loss, double h = 1e-5, std::string* worst_name = nullptr);

std::vector<CheckResult> run_gradient_checks(const SelfcheckOptions& options);
std::vector<CheckResult> run_normalization_checks(const SelfcheckOptions& options);
std::vector<CheckResult> run_metric_checks(const SelfcheckOptions& options);

struct SelfcheckReport {
  std::vector<CheckResult> results;
  double seconds = 0.0;

  bool all_passed() const;
  void print(std::ostream& out) const;
};

SelfcheckReport run_selfcheck(const SelfcheckOptions& options);

}  // namespace cstafnet
