#include "tcl/weibull.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "tcl/error.hpp"

namespace tcl {

double weibull_cdf(double x, double shape, double scale) {
  if (x <= 0.0) return 0.0;
  return -std::expm1(-std::pow(x / scale, shape));
}

WeibullFit fit_weibull(std::span<const double> samples, double tolerance,
                       std::size_t max_iterations) {
  if (samples.size() < 2) throw DegenerateError("weibull: need at least 2 samples");
  double xmax = 0.0;
  for (double x : samples) {
    if (!(x > 0.0) || !std::isfinite(x)) {
      throw DegenerateError("weibull: samples must be finite and > 0 (degenerate tail)");
    }
    xmax = std::max(xmax, x);
  }
  // Work on x / max(x) so every power stays in (0, 1].
  const std::size_t n = samples.size();
  std::vector<double> logs(n);
  double mean_log = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    logs[i] = std::log(samples[i] / xmax);
    mean_log += logs[i];
  }
  mean_log /= static_cast<double>(n);
  double var_log = 0.0;
  for (double l : logs) var_log += (l - mean_log) * (l - mean_log);
  var_log /= static_cast<double>(n);
  if (!(var_log > 1e-24)) throw DegenerateError("weibull: identical samples (degenerate tail)");

  struct Eval {
    double g, dg;
  };
  auto score = [&](double k) {
    double b = 0.0, a = 0.0, c = 0.0;
    for (double l : logs) {
      const double p = std::exp(k * l);
      b += p;
      a += p * l;
      c += p * l * l;
    }
    const double ab = a / b;
    return Eval{ab - 1.0 / k - mean_log, c / b - ab * ab + 1.0 / (k * k)};
  };

  double lo = 1e-6;
  double hi = 1.0;
  while (score(hi).g <= 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e7) throw DegenerateError("weibull: shape diverges (near-identical samples)");
  }

  // Moment-style start: sd(log x) = pi / (k sqrt 6).
  double k = std::numbers::pi / (std::sqrt(6.0 * var_log));
  if (!(k > lo && k < hi)) k = 0.5 * (lo + hi);
  WeibullFit fit;
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    const Eval e = score(k);
    if (e.g < 0.0) lo = k; else hi = k;
    double next = k - e.g / e.dg;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const bool done = std::abs(next - k) <= tolerance * std::max(1.0, k) || e.g == 0.0;
    k = next;
    fit.iterations = it;
    if (done) {
      double mean_pow = 0.0;
      for (double l : logs) mean_pow += std::exp(k * l);
      mean_pow /= static_cast<double>(n);
      fit.shape = k;
      fit.scale = xmax * std::pow(mean_pow, 1.0 / k);
      return fit;
    }
  }
  throw NumericError("weibull: shape iteration did not converge");
}

}  // namespace tcl
