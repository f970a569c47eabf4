#include "advkit/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "advkit/error.hpp"

namespace advkit {

GradCheckReport grad_check(const std::function<double(const Tensor&)>& f, const Tensor& point,
                           const Tensor& analytic, const GradCheckOptions& options) {
  if (!(point.shape() == analytic.shape()))
    fail(Errc::shape_mismatch, "grad_check: point " + point.shape().str() + " vs gradient " +
                                   analytic.shape().str());
  if (!(options.h > 0.0)) fail(Errc::invalid_argument, "grad_check: step must be positive");

  GradCheckReport report;
  Tensor probe = point;
  const auto step = static_cast<float>(options.h);
  for (std::size_t i = 0; i < point.numel(); ++i) {
    if (options.skip && options.skip(i)) {
      ++report.skipped;
      continue;
    }
    const float original = point[i];
    probe[i] = original + step;
    const double up = f(probe);
    probe[i] = original - step;
    const double down = f(probe);
    probe[i] = original;
    // Divide by the step actually taken after float rounding.
    const double taken = static_cast<double>(original + step) - static_cast<double>(original - step);
    const double numeric = (up - down) / taken;
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > report.max_relative_error || report.checked == 0) {
      report.max_relative_error = std::max(report.max_relative_error, rel);
      if (rel >= report.max_relative_error) report.worst_index = i;
    }
    ++report.checked;
  }
  report.passed = report.checked > 0 && report.max_relative_error <= options.tolerance;
  return report;
}

}  // namespace advkit
