#include "oodkit/weibull.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "oodkit/error.hpp"

namespace oodkit {

double WeibullParams::cdf(double x) const {
  if (!(x > 0.0)) return 0.0;
  if (std::isinf(x)) return 1.0;
  return -std::expm1(-std::pow(x / scale, shape));
}

namespace {

// g(k) = sum y^k ln y / sum y^k - 1/k - mean(ln y); increasing in k. Samples
// are pre-divided by their maximum so that y^k never overflows.
struct ShapeEquation {
  std::vector<double> log_y;
  double mean_log = 0.0;

  void eval(double k, double& g, double& dg) const {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    for (double u : log_y) {
      const double w = std::exp(k * u);
      s0 += w;
      s1 += w * u;
      s2 += w * u * u;
    }
    const double m1 = s1 / s0;
    g = m1 - 1.0 / k - mean_log;
    dg = s2 / s0 - m1 * m1 + 1.0 / (k * k);
  }
};

}  // namespace

WeibullParams fit_weibull(std::span<const double> samples, const WeibullFitOptions& opts) {
  if (samples.size() < 2) {
    throw Error(ErrorCode::kDegenerate, "Weibull fit needs at least two samples");
  }
  double max_x = 0.0;
  for (double x : samples) {
    if (!(x > 0.0) || !std::isfinite(x)) {
      throw Error(ErrorCode::kDegenerate, "Weibull samples must be positive and finite");
    }
    max_x = std::max(max_x, x);
  }
  ShapeEquation eq;
  eq.log_y.reserve(samples.size());
  for (double x : samples) eq.log_y.push_back(std::log(x / max_x));
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double u : eq.log_y) mean += u;
  mean /= n;
  eq.mean_log = mean;
  double var = 0.0;
  for (double u : eq.log_y) var += (u - mean) * (u - mean);
  var /= n;
  const double sd = std::sqrt(var);
  if (!(sd > 1e-12)) {
    throw Error(ErrorCode::kDegenerate, "zero-variance tail has no Weibull MLE");
  }

  // Log-Weibull is Gumbel with standard deviation pi / (k sqrt 6).
  double k = 1.2825498301618641 / sd;
  double lo = 0.0, hi = std::numeric_limits<double>::infinity();
  bool converged = false;
  for (int it = 0; it < opts.max_iterations; ++it) {
    double g = 0.0, dg = 0.0;
    eq.eval(k, g, dg);
    if (g > 0.0) hi = std::min(hi, k);
    else lo = std::max(lo, k);
    double next = k - g / dg;
    if (!(next > lo && next < hi) || !std::isfinite(next)) {
      next = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * k;
    }
    const double step = std::abs(next - k);
    k = next;
    if (step <= opts.tolerance * std::max(1.0, k)) {
      converged = true;
      break;
    }
  }
  if (!converged || !std::isfinite(k) || !(k > 0.0)) {
    throw Error(ErrorCode::kNotConverged, "Weibull MLE did not converge");
  }
  double s0 = 0.0;
  for (double u : eq.log_y) s0 += std::exp(k * u);
  WeibullParams out;
  out.shape = k;
  out.scale = max_x * std::pow(s0 / n, 1.0 / k);
  return out;
}

}  // namespace oodkit
