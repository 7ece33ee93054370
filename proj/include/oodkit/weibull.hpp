#pragma once

#include <span>

namespace oodkit {

/// Two-parameter Weibull, F(x) = 1 - exp(-(x / scale)^shape) for x >= 0.
struct WeibullParams {
  double shape = 1.0;
  double scale = 1.0;

  double cdf(double x) const;
};

/// Per-class OpenMax tail. valid == false means the class is never
/// recalibrated (too few samples or a zero-variance tail).
struct WeibullTail {
  WeibullParams params;
  bool valid = false;
  bool shrunk = false;  // fewer than the requested tail size were available
  std::size_t samples = 0;
};

struct WeibullFitOptions {
  double tolerance = 1e-8;
  int max_iterations = 200;
};

/// Maximum-likelihood fit by Newton iteration on the shape profile equation.
/// Throws kDegenerate for fewer than two samples, non-positive samples or a
/// zero-variance sample, kNotConverged when Newton fails.
WeibullParams fit_weibull(std::span<const double> samples, const WeibullFitOptions& opts = {});

}  // namespace oodkit
