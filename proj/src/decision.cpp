#include "oodkit/decision.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "oodkit/error.hpp"

namespace oodkit {

std::size_t required_retained(std::size_t n, double target_tpr) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "empty score list");
  if (!(target_tpr > 0.0 && target_tpr <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "target TPR must be in (0, 1]");
  }
  const double dn = static_cast<double>(n);
  auto ok = [&](std::size_t k) { return static_cast<double>(k) / dn >= target_tpr; };
  auto k = static_cast<std::size_t>(std::ceil(target_tpr * dn));
  k = std::clamp<std::size_t>(k, 1, n);
  while (k > 1 && ok(k - 1)) --k;
  while (k < n && !ok(k)) ++k;
  return k;
}

Threshold calibrate_threshold(std::span<const double> id_scores, double target_tpr,
                              std::string method) {
  const std::size_t k = required_retained(id_scores.size(), target_tpr);
  std::vector<double> sorted(id_scores.begin(), id_scores.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   sorted.end(), std::greater<>());
  Threshold t;
  t.value = sorted[k - 1];
  t.target_tpr = target_tpr;
  t.positive = PositiveClass::kId;
  t.method = std::move(method);
  return t;
}

std::vector<Verdict> classify(std::span<const double> scores, const Threshold& t) {
  std::vector<Verdict> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back(classify(s, t));
  return out;
}

}  // namespace oodkit
