#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "oodkit/dump_io.hpp"
#include "oodkit/fit.hpp"
#include "oodkit/manifest.hpp"
#include "oodkit/methods.hpp"
#include "oodkit/report.hpp"
#include "oodkit/scores.hpp"

namespace oodkit {

struct GridAxis {
  std::string param;
  std::vector<double> values;
};

/// Hyperparameter grid for one method. The cartesian product is enumerated
/// with the first axis outermost; that order also breaks AUROC ties.
struct SweepSpec {
  Method method;
  std::vector<GridAxis> grid;
};

/// The search space used for every method by default. Subspace dimensions
/// not below the feature dimension are dropped (falling back to the
/// automatic choice when none remain).
SweepSpec default_sweep(Method m, std::size_t feature_dim);

/// Throws kInvalidArgument for values outside the method's ranges.
std::vector<MethodConfig> expand_grid(const SweepSpec& spec);

struct EvalData {
  FeatureSet features;
  std::optional<AugmentedDump> augmented;
};

EvalData subset(const EvalData& data, const std::vector<std::size_t>& rows);

struct HoldoutSplit {
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded split keeping round(n * fraction) rows (at least one on each side)
/// for validation. Both index lists are sorted. Throws for n < 2.
HoldoutSplit holdout_split(std::size_t n, double fraction, std::uint64_t seed);

/// Fits what cfg needs, then scores data.
ScoreVector score_data(const MethodConfig& cfg, FittedStats& stats, const FitInputs& fit, const EvalData& data,
                       Execution exec = Execution::kParallel);

struct SweepPoint {
  MethodConfig config;
  std::optional<double> val_auroc;
  std::string error;
};

struct SweepOutcome {
  MethodConfig selected;
  std::size_t selected_index = 0;
  std::vector<SweepPoint> table;
};

/// Evaluates every grid point by validation AUROC (val_id positive) and
/// selects the maximum; ties keep the earliest point. Grid points that fail
/// are recorded; throws only when all of them fail.
SweepOutcome sweep(const SweepSpec& spec, FittedStats& stats, const FitInputs& fit, const EvalData& val_id,
                   const EvalData& val_ood, Execution exec = Execution::kParallel);

/// Every dump and head read during a benchmark goes through here, so the
/// protocol can forbid paths per phase and tests can audit what was opened.
class DumpLoader {
 public:
  enum class Phase { kFit, kSweep, kTest };

  struct Access {
    Phase phase;
    std::filesystem::path path;
    bool denied;
  };

  virtual ~DumpLoader() = default;

  /// Paths in `denied` raise kAccessDenied until the next phase begins.
  void begin_phase(Phase phase, std::set<std::filesystem::path> denied = {});
  Phase phase() const { return phase_; }

  DumpContents load_dump(const std::filesystem::path& path);
  LinearHead load_head(const std::filesystem::path& path);

  const std::vector<Access>& accesses() const { return accesses_; }

 protected:
  virtual DumpContents read_dump_file(const std::filesystem::path& path) { return read_dump(path); }
  virtual LinearHead read_head_file(const std::filesystem::path& path) { return read_head(path); }

 private:
  void check(const std::filesystem::path& path);

  Phase phase_ = Phase::kFit;
  std::set<std::filesystem::path> denied_;
  std::vector<Access> accesses_;
};

const char* to_string(DumpLoader::Phase phase);

struct HarnessOptions {
  std::uint64_t seed = 0;
  double ood_val_fraction = 0.2;
  Execution exec = Execution::kParallel;
  FitOptions fit;
  std::map<Method, SweepSpec> sweeps;  // overrides default_sweep per method
  bool sweep_only = false;             // stop before the test phase
};

/// Full protocol per (backbone, seed): fit on id_train/id_val, sweep on
/// id_val against the validation part of each OoD dataset (id_test is not
/// readable during the sweep), then score id_test and the test part of every
/// OoD dataset. Group metrics average the group's datasets. Failures are
/// isolated per (backbone, seed, method) and recorded in the report.
EvalReport run_benchmark(const BenchmarkManifest& manifest, const std::vector<Method>& methods,
                         const HarnessOptions& options = {}, DumpLoader* loader = nullptr);

/// Fits the default configuration of every method on one run and calibrates
/// a 95%-TPR threshold for each on id_val. Methods that cannot be fit are
/// listed in `failed` and skipped.
FittedStats fit_run(const BenchmarkManifest& manifest, std::size_t backbone, std::size_t seed,
                    const std::vector<Method>& methods, const HarnessOptions& options,
                    std::vector<std::string>* failed = nullptr);

struct CorrelationRow {
  std::string group;
  std::optional<double> rho;
  std::size_t n = 0;
  std::string note;
};

/// Spearman rho between classifier accuracy and AUROC over all
/// (method, backbone) aggregates, per OoD group. Accuracy comes from
/// acc_by_backbone when given, else from the aggregates themselves.
std::vector<CorrelationRow> correlation_study(const EvalReport& report,
                                              const std::map<std::string, double>& acc_by_backbone = {});

}  // namespace oodkit
