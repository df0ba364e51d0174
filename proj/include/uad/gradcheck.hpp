#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "uad/autodiff.hpp"

namespace uad {

/// Builds a scalar loss from a variable on its tape.
using ScalarFn = std::function<Var(Var)>;

/// max_i |analytic_i - fd_i| / (|fd_i| + 1e-8) with central differences of step h.
double finite_diff_check(const ScalarFn& f, const Tensor& x, double h = 1e-4);

/// One named family of random gradient checks. `instance` draws a random
/// input with at most 64 elements from `seed` and returns its max relative error.
struct GradCheckCase {
  std::string name;
  std::function<double(std::uint64_t seed, double h)> instance;
};

struct GradCheckRow {
  std::string name;
  double max_error = 0.0;
  int instances = 0;
  bool pass = false;
};

std::vector<GradCheckRow> run_gradchecks(const std::vector<GradCheckCase>& cases, int instances,
                                         double h, double tolerance, std::uint64_t seed);

/// Every differentiable primitive and loss used by the attack pipeline.
std::vector<GradCheckCase> standard_gradcheck_suite();

}  // namespace uad
