// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

namespace tfm {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// kTwoPoint:  (f(x+h) − f(x−h)) / 2h, truncation O(h²).
/// kFourPoint: (−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h, truncation O(h⁴).
enum class Stencil { kTwoPoint, kFourPoint };

/// Central differences of a scalar function against an analytic gradient.
/// Relative error per coordinate is |a − n| / (|a| + |n| + 1e-8).
GradCheckResult grad_check(const std::function<double(const std::vector<double>&)>& f,
                           const std::vector<double>& point,
                           const std::vector<double>& analytic_gradient, double h,
                           Stencil stencil = Stencil::kFourPoint);

/// Convenience overload for f: R → R.
GradCheckResult grad_check_scalar(const std::function<double(double)>& f,
                                  const std::function<double(double)>& derivative, double x,
                                  double h, Stencil stencil = Stencil::kFourPoint);

}  // namespace tfm
