#include "oodkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oodkit/decision.hpp"

namespace oodkit {

double auroc(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty() || neg.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "AUROC needs at least one score on each side");
  }
  std::vector<double> sorted(neg.begin(), neg.end());
  std::sort(sorted.begin(), sorted.end());
  // Exact integer counts so the result equals the pairwise definition.
  std::uint64_t greater = 0;
  std::uint64_t ties = 0;
  for (double p : pos) {
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), p);
    const auto hi = std::upper_bound(lo, sorted.end(), p);
    greater += static_cast<std::uint64_t>(lo - sorted.begin());
    ties += static_cast<std::uint64_t>(hi - lo);
  }
  const double pairs = static_cast<double>(pos.size()) * static_cast<double>(neg.size());
  return (static_cast<double>(greater) + 0.5 * static_cast<double>(ties)) / pairs * 100.0;
}

double fpr_at_tpr(std::span<const double> pos, std::span<const double> neg, double target_tpr) {
  if (neg.empty()) throw Error(ErrorCode::kInvalidArgument, "FPR needs at least one negative score");
  const Threshold t = calibrate_threshold(pos, target_tpr);
  const auto passed = std::count_if(neg.begin(), neg.end(),
                                    [&](double s) { return classify(s, t) == Verdict::kId; });
  return static_cast<double>(passed) / static_cast<double>(neg.size()) * 100.0;
}

double accuracy(const RowMatrix& logits, std::span<const std::int32_t> labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "logits/labels length mismatch");
  }
  if (labels.empty()) throw Error(ErrorCode::kInvalidArgument, "accuracy of empty set");
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (static_cast<std::int32_t>(argmax(logits.row(i).transpose())) == labels[static_cast<std::size_t>(i)]) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size()) * 100.0;
}

std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::kDimensionMismatch, "length mismatch");
  if (x.size() < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two pairs");
  const auto rx = midranks(x);
  const auto ry = midranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw Error(ErrorCode::kDegenerate, "Spearman correlation undefined for constant input");
  }
  return sxy / std::sqrt(sxx * syy);
}

MetricRow evaluate_scores(std::span<const double> id_scores, std::span<const double> ood_scores) {
  MetricRow row;
  row.n_id = id_scores.size();
  row.n_ood = ood_scores.size();
  row.auroc = auroc(id_scores, ood_scores);
  row.fpr95_id = fpr_at_tpr(id_scores, ood_scores, 0.95);
  row.fpr99_id = fpr_at_tpr(id_scores, ood_scores, 0.99);
  std::vector<double> neg_id(id_scores.size()), neg_ood(ood_scores.size());
  std::transform(id_scores.begin(), id_scores.end(), neg_id.begin(), std::negate<>());
  std::transform(ood_scores.begin(), ood_scores.end(), neg_ood.begin(), std::negate<>());
  row.fpr95_ood = fpr_at_tpr(neg_ood, neg_id, 0.95);
  row.fpr99_ood = fpr_at_tpr(neg_ood, neg_id, 0.99);
  return row;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

MetricSummary summarize(std::span<const MetricRow> runs) {
  MetricSummary out;
  out.runs = runs.size();
  out.single_run = runs.size() == 1;
  auto collect = [&](auto field) {
    std::vector<double> v;
    v.reserve(runs.size());
    for (const auto& r : runs) v.push_back(field(r));
    return mean_std(v);
  };
  out.fpr95_id = collect([](const MetricRow& r) { return r.fpr95_id; });
  out.fpr99_id = collect([](const MetricRow& r) { return r.fpr99_id; });
  out.fpr95_ood = collect([](const MetricRow& r) { return r.fpr95_ood; });
  out.fpr99_ood = collect([](const MetricRow& r) { return r.fpr99_ood; });
  out.auroc = collect([](const MetricRow& r) { return r.auroc; });
  const bool all_acc = !runs.empty() && std::all_of(runs.begin(), runs.end(),
                                                    [](const MetricRow& r) { return r.acc.has_value(); });
  if (all_acc) out.acc = collect([](const MetricRow& r) { return *r.acc; });
  return out;
}

}  // namespace oodkit
