// SPDX-License-Identifier: Apache-2.0
#include "tfm/grad_check.hpp"

#include <cmath>

#include "tfm/error.hpp"

namespace tfm {

GradCheckResult grad_check(const std::function<double(const std::vector<double>&)>& f,
                           const std::vector<double>& point,
                           const std::vector<double>& analytic_gradient, double h,
                           Stencil stencil) {
  if (point.size() != analytic_gradient.size()) {
    throw NumericError("grad_check: gradient length does not match point");
  }
  GradCheckResult result;
  std::vector<double> probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    auto at = [&](double offset) {
      probe[i] = point[i] + offset;
      return f(probe);
    };
    double numeric = 0.0;
    if (stencil == Stencil::kTwoPoint) {
      numeric = (at(h) - at(-h)) / (2.0 * h);
    } else {
      const double near = at(h) - at(-h);
      const double far = at(2.0 * h) - at(-2.0 * h);
      numeric = (8.0 * near - far) / (12.0 * h);
    }
    probe[i] = point[i];
    const double analytic = analytic_gradient[i];
    const double rel =
        std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-8);
    if (i == 0 || rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_index = i;
      result.analytic = analytic;
      result.numeric = numeric;
    }
  }
  return result;
}

GradCheckResult grad_check_scalar(const std::function<double(double)>& f,
                                  const std::function<double(double)>& derivative, double x,
                                  double h, Stencil stencil) {
  return grad_check([&](const std::vector<double>& p) { return f(p[0]); }, {x}, {derivative(x)},
                    h, stencil);
}

}  // namespace tfm
