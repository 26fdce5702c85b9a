#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tfbench/tensor.hpp"

namespace tfbench {

struct GradCheckReport {
  // Largest relative error over elements judged in relative mode.
  double max_rel_error = 0.0;
  // Largest absolute error over elements judged in absolute mode (analytic
  // gradient magnitude below the fallback threshold).
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  bool passed = false;
  // Set when a perturbed evaluation produced a non-finite value.
  bool oracle_failure = false;
  std::string detail;
};

struct GradCheckOptions {
  double step = 1e-5;
  double rel_tol = 1e-4;
  double abs_tol = 1e-7;
  // Below this analytic magnitude the element is judged by abs_tol.
  double abs_threshold = 1e-6;
};

// Compares analytic gradients of a scalar-valued `f` with central
// differences, with respect to every tensor in `wrt` (which must be leaves;
// they are perturbed in place and restored).
GradCheckReport finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> wrt,
                                  const GradCheckOptions& options = {});

// Single-input convenience form: checks d f(x) / dx.
GradCheckReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double tol);

}  // namespace tfbench
