#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "apn/autodiff.hpp"

namespace apn {

/// Builds a scalar loss on the given tape from the current leaf values.
using LossFn = std::function<Var<double>(Tape<double>&)>;

struct GradCheckOptions {
  double h = 1e-5;
  // Relative error denominator is max(|analytic|, |numeric|, floor * max(1, |f|)).
  double floor = 1e-12;
  // Coordinates checked per leaf tensor; 0 checks all of them.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;  // coordinate sampling
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  // Coordinates whose stencil crossed a relu/max-pool kink at every step size.
  std::size_t skipped = 0;
  std::size_t worst_leaf = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Central differences (f(x + h e) - f(x - h e)) / 2h against the tape
/// gradient, per coordinate of every leaf. A stencil whose kink signature
/// differs from the base point is retried with h / 10 and h / 100, then
/// skipped.
GradCheckResult grad_check(const LossFn& f, const std::vector<Var<double>>& leaves,
                           const GradCheckOptions& opts = {});

struct GradSuiteEntry {
  std::string name;
  bool end_to_end = false;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed() const { return max_rel_err <= tolerance && checked > 0; }
};

struct GradSuiteOptions {
  double op_tolerance = 1e-6;
  double e2e_tolerance = 1e-4;
  // End-to-end models contain structurally zero gradients (a bias feeding a
  // batch norm); the floor keeps rounding noise there from reading as error.
  double e2e_floor = 1e-5;
  int op_seeds = 5;
  std::size_t e2e_coords = 12;
  bool include_ops = true;
  bool include_e2e = true;
};

/// Every differentiable op on small random tensors (seeds 0..op_seeds-1), and
/// every attention variant plus the toy pyramid and model end to end.
std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& opts = {});

}  // namespace apn
