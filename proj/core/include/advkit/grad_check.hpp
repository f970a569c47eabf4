#pragma once

#include <cstddef>
#include <functional>

#include "advkit/tensor.hpp"

namespace advkit {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = false;
};

struct GradCheckOptions {
  double h = 1e-3;
  double tolerance = 1e-2;
  /// Denominator floor: relative error is |a - n| / max(|a|, |n|, floor).
  /// Layers run in float32, so with h = 1e-3 the difference quotient carries
  /// ~1e-4 of absolute rounding noise; below |g| ~ 0.1 a plain relative error
  /// would measure that noise rather than the gradient.
  double floor = 1e-1;
  /// Coordinates for which skip(i) returns true are not compared (for
  /// example where x +/- h straddles a ReLU or max-pool kink).
  std::function<bool(std::size_t)> skip;
};

/// Compares `analytic` against central differences (f(x+h) - f(x-h)) / 2h
/// taken coordinate by coordinate around `point`.
GradCheckReport grad_check(const std::function<double(const Tensor&)>& f, const Tensor& point,
                           const Tensor& analytic, const GradCheckOptions& options = {});

}  // namespace advkit
