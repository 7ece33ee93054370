#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "oodkit/types.hpp"

namespace oodkit {

/// All values in percent. AUROC is stored for the ID-positive polarity only;
/// the OoD-positive AUROC is its complement.
struct MetricRow {
  double fpr95_id = 0.0;
  double fpr99_id = 0.0;
  double fpr95_ood = 0.0;
  double fpr99_ood = 0.0;
  double auroc = 0.0;
  std::optional<double> acc;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;

  double auroc_ood_positive() const { return 100.0 - auroc; }
};

/// Mann-Whitney: (#{pos > neg} + 0.5 #{pos == neg}) / (n_pos n_neg) * 100.
double auroc(std::span<const double> pos, std::span<const double> neg);

/// FPR at the threshold calibrated on pos for target_tpr (a fraction), with
/// the shared "score >= lambda" convention, in percent.
double fpr_at_tpr(std::span<const double> pos, std::span<const double> neg, double target_tpr);

/// Top-1 accuracy in percent; argmax ties go to the lower index.
double accuracy(const RowMatrix& logits, std::span<const std::int32_t> labels);

/// Midranks (1-based), ties share the average rank.
std::vector<double> midranks(std::span<const double> values);

/// Pearson correlation of midranks. Throws kDegenerate for constant input.
double spearman_rho(std::span<const double> x, std::span<const double> y);

/// Both polarities from ID and OoD scores (higher = more ID).
MetricRow evaluate_scores(std::span<const double> id_scores, std::span<const double> ood_scores);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
};

struct MetricSummary {
  MeanStd fpr95_id, fpr99_id, fpr95_ood, fpr99_ood, auroc;
  std::optional<MeanStd> acc;
  std::size_t runs = 0;
  bool single_run = false;  // n = 1: std reported as 0
};

MeanStd mean_std(std::span<const double> values);
MetricSummary summarize(std::span<const MetricRow> runs);

}  // namespace oodkit
