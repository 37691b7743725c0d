#pragma once

#include <cstddef>
#include <span>

namespace tcl {

struct WeibullFit {
  double shape = 1.0;  // k
  double scale = 1.0;  // lambda
  std::size_t iterations = 0;
};

// 1 - exp(-(x / scale)^shape) for x >= 0, 0 below.
double weibull_cdf(double x, double shape, double scale);

// Two-parameter maximum likelihood fit. The shape solves the profile score
// equation by Newton iteration, falling back to bisection whenever a step
// leaves the current bracket; the scale follows in closed form.
// Throws DegenerateError for fewer than 2 samples, non-positive samples or
// identical samples.
WeibullFit fit_weibull(std::span<const double> samples, double tolerance = 1e-8,
                       std::size_t max_iterations = 200);

}  // namespace tcl
