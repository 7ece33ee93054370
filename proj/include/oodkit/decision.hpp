#pragma once

#include <span>
#include <string>
#include <vector>

namespace oodkit {

enum class Verdict { kId, kOod };
enum class PositiveClass { kId, kOod };

/// Score threshold. A sample is ID iff score >= value; with this convention
/// the calibrated value is an observed score and the TPR guarantee is exact.
struct Threshold {
  double value = 0.0;
  double target_tpr = 0.95;  // fraction in (0, 1]
  PositiveClass positive = PositiveClass::kId;
  std::string method;
};

/// Number of retained samples k = min{k : k / n >= target}, evaluated with the
/// same floating-point predicate the threshold contract uses.
std::size_t required_retained(std::size_t n, double target_tpr);

/// Largest lambda with |{s >= lambda}| / n >= target_tpr, i.e. the k-th
/// largest score. Throws kInvalidArgument on empty input or target outside (0, 1].
Threshold calibrate_threshold(std::span<const double> id_scores, double target_tpr,
                              std::string method = {});

inline Verdict classify(double score, const Threshold& t) {
  return score >= t.value ? Verdict::kId : Verdict::kOod;
}

std::vector<Verdict> classify(std::span<const double> scores, const Threshold& t);

}  // namespace oodkit
