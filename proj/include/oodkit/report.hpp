#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "oodkit/metrics.hpp"

namespace oodkit {

/// One (method, backbone, seed, OoD group) cell. Metrics hold both
/// polarities; a failed cell keeps its error in status.
struct CellRow {
  std::string method;  // method id
  std::string backbone;
  std::string seed;
  std::string group;
  std::optional<MetricRow> metrics;
  std::string config;       // selected hyperparameters, MethodConfig::describe()
  std::string status = "ok";

  bool ok() const { return metrics.has_value(); }
};

/// Mean and sample std over seeds. summary is empty unless every seed has a
/// successful row; the missing seeds are listed instead.
struct AggregateRow {
  std::string method;
  std::string backbone;
  std::string group;
  std::optional<MetricSummary> summary;
  std::size_t expected = 0;
  std::vector<std::string> missing_seeds;
};

/// Backbone with the highest mean AUROC over a benchmark's groups
/// ("far": groups named far*, "near": groups named near*).
struct BestBackbone {
  std::string method;
  std::string benchmark;
  std::optional<std::string> backbone;
  double mean_auroc = 0.0;
};

struct SweepRow {
  std::string method;
  std::string backbone;
  std::string seed;
  std::string config;
  std::optional<double> val_auroc;
  std::string status = "ok";
  bool selected = false;
};

struct EvalReport {
  std::vector<std::string> methods;  // method ids, report order
  std::vector<std::string> backbones;
  std::vector<std::string> seeds;
  std::vector<std::string> groups;
  std::vector<CellRow> rows;
  std::vector<SweepRow> sweeps;
  std::vector<std::string> failures;  // run-level problems, e.g. unreadable dumps

  // Derived by finalize_report.
  std::vector<AggregateRow> aggregates;
  std::vector<BestBackbone> best;

  bool any_failure() const;
  const AggregateRow* aggregate(const std::string& method, const std::string& backbone,
                                const std::string& group) const;
  const BestBackbone* best_for(const std::string& method, const std::string& benchmark) const;
};

/// Sorts rows into (method, backbone, seed, group) declaration order and
/// recomputes aggregates and best-backbone selections. Ties in mean AUROC go
/// to the backbone listed first.
void finalize_report(EvalReport& report);

/// One line per cell; a header-only file for an empty report.
std::string results_csv(const EvalReport& report);
std::string sweeps_csv(const EvalReport& report);

/// Tables grouped by method family, mean over seeds on each method's best
/// network, followed by per-network AUROC and classifier accuracy.
std::string text_report(const EvalReport& report);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

/// Writes results.csv, sweeps.csv, report.txt and report.json into out_dir.
void emit_report(const EvalReport& report, const std::filesystem::path& out_dir);

}  // namespace oodkit
