#include "oodkit/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oodkit/decision.hpp"
#include "oodkit/metrics.hpp"

namespace oodkit {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t run_seed(std::uint64_t base, std::size_t backbone, std::size_t seed, std::size_t salt) {
  return mix(mix(mix(base) + backbone) + seed * 0x10001ULL + salt);
}

template <typename M>
M take_rows(const M& m, const std::vector<std::size_t>& rows) {
  M out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

EvalData to_eval(DumpContents&& c) { return EvalData{std::move(c.features), std::move(c.augmented)}; }

/// Pooled validation OoD rows and per-dataset test rows of one run.
struct OodData {
  EvalData val;
  std::vector<std::vector<EvalData>> test;  // [group][dataset]
};

EvalData concat(const std::vector<EvalData>& parts) {
  EvalData out;
  if (parts.empty()) return out;
  Eigen::Index n = 0;
  for (const auto& p : parts) n += p.features.features.rows();
  const auto& first = parts.front();
  const Eigen::Index d = first.features.features.cols();
  out.features.num_classes = first.features.num_classes;
  out.features.features.resize(n, d);
  bool logits = true, stacks = true, odin = true;
  for (const auto& p : parts) {
    logits = logits && p.features.logits.has_value();
    stacks = stacks && p.augmented && p.augmented->dropout_prob_stacks &&
             p.augmented->dropout_samples == first.augmented->dropout_samples;
    odin = odin && p.augmented && p.augmented->odin_logits &&
           p.augmented->odin_epsilon == first.augmented->odin_epsilon;
  }
  if (logits) out.features.logits = RowMatrix(n, first.features.logits->cols());
  if (stacks || odin) {
    out.augmented = AugmentedDump{};
    out.augmented->source_checkpoint = first.augmented->source_checkpoint;
    if (stacks) {
      out.augmented->dropout_samples = first.augmented->dropout_samples;
      out.augmented->dropout_prob_stacks = RowMatrix(n, first.augmented->dropout_prob_stacks->cols());
    }
    if (odin) {
      out.augmented->odin_epsilon = first.augmented->odin_epsilon;
      out.augmented->odin_logits = RowMatrix(n, first.augmented->odin_logits->cols());
    }
  }
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    const Eigen::Index k = p.features.features.rows();
    if (p.features.features.cols() != d) throw Error(ErrorCode::kDimensionMismatch, "OoD datasets differ in feature_dim");
    out.features.features.middleRows(at, k) = p.features.features;
    if (logits) out.features.logits->middleRows(at, k) = *p.features.logits;
    if (stacks) out.augmented->dropout_prob_stacks->middleRows(at, k) = *p.augmented->dropout_prob_stacks;
    if (odin) out.augmented->odin_logits->middleRows(at, k) = *p.augmented->odin_logits;
    at += k;
  }
  return out;
}

MetricRow average_rows(const std::vector<MetricRow>& rows) {
  MetricRow out;
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    out.fpr95_id += r.fpr95_id / n;
    out.fpr95_ood += r.fpr95_ood / n;
    out.fpr99_id += r.fpr99_id / n;
    out.fpr99_ood += r.fpr99_ood / n;
    out.auroc += r.auroc / n;
    out.n_ood += r.n_ood;
  }
  if (!rows.empty()) out.n_id = rows.front().n_id;
  return out;
}

}  // namespace

SweepSpec default_sweep(Method m, std::size_t feature_dim) {
  SweepSpec spec{m, {}};
  switch (m) {
    case Method::kGen:
      spec.grid = {{"gamma", {0.01, 0.1, 0.5}}, {"M", {10, 50, 100}}};
      break;
    case Method::kKnn:
      spec.grid = {{"K", {50}}};
      break;
    case Method::kReact:
    case Method::kAsh:
      spec.grid = {{"percentile", {65, 80, 95, 99}}};
      break;
    case Method::kRelation:
      spec.grid = {{"pow", {8}}};
      break;
    case Method::kFdbd:
      spec.grid = {{"distance_as_normalizer", {0, 1}}};
      break;
    case Method::kOdin:
      spec.grid = {{"T", {1}}};
      break;
    case Method::kVim:
    case Method::kResidual: {
      std::vector<double> dims;
      for (double dim : {64.0, 128.0, 256.0}) {
        if (dim < static_cast<double>(feature_dim)) dims.push_back(dim);
      }
      if (!dims.empty()) spec.grid = {{"dim", dims}};
      break;
    }
    default:
      break;
  }
  return spec;
}

std::vector<MethodConfig> expand_grid(const SweepSpec& spec) {
  std::vector<MethodConfig> out{MethodConfig(spec.method)};
  for (const auto& axis : spec.grid) {
    if (axis.values.empty()) throw Error(ErrorCode::kInvalidArgument, "empty grid for " + axis.param);
    std::vector<MethodConfig> next;
    for (const auto& base : out) {
      for (double v : axis.values) {
        MethodConfig c = base;
        c.set(axis.param, v);
        next.push_back(std::move(c));
      }
    }
    out = std::move(next);
  }
  return out;
}

EvalData subset(const EvalData& data, const std::vector<std::size_t>& rows) {
  EvalData out;
  const auto& f = data.features;
  out.features.num_classes = f.num_classes;
  out.features.features = take_rows(f.features, rows);
  if (f.logits) out.features.logits = take_rows(*f.logits, rows);
  if (f.labels) {
    std::vector<std::int32_t> labels;
    for (auto i : rows) labels.push_back((*f.labels)[i]);
    out.features.labels = std::move(labels);
  }
  if (f.ids) {
    std::vector<std::string> ids;
    for (auto i : rows) ids.push_back((*f.ids)[i]);
    out.features.ids = std::move(ids);
  }
  if (data.augmented) {
    AugmentedDump aug = *data.augmented;
    if (aug.dropout_prob_stacks) aug.dropout_prob_stacks = take_rows(*aug.dropout_prob_stacks, rows);
    if (aug.odin_logits) aug.odin_logits = take_rows(*aug.odin_logits, rows);
    out.augmented = std::move(aug);
  }
  return out;
}

HoldoutSplit holdout_split(std::size_t n, double fraction, std::uint64_t seed) {
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "holdout split needs at least two samples");
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error(ErrorCode::kInvalidArgument, "holdout fraction must be in (0, 1)");
  const auto n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction)), 1, n - 1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
  HoldoutSplit split;
  split.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

ScoreVector score_data(const MethodConfig& cfg, FittedStats& stats, const FitInputs& fit, const EvalData& data,
                       Execution exec) {
  ensure_fitted(stats, cfg, fit);
  ScoreInputs in;
  in.data = &data.features;
  in.augmented = data.augmented ? &*data.augmented : nullptr;
  in.head = fit.head;
  in.stats = &stats;
  return compute_scores(cfg, in, exec);
}

SweepOutcome sweep(const SweepSpec& spec, FittedStats& stats, const FitInputs& fit, const EvalData& val_id,
                   const EvalData& val_ood, Execution exec) {
  SweepOutcome out{MethodConfig(spec.method), 0, {}};
  std::optional<double> best;
  for (auto& cfg : expand_grid(spec)) {
    SweepPoint point{cfg, std::nullopt, {}};
    try {
      const auto id = score_data(cfg, stats, fit, val_id, exec);
      const auto ood = score_data(cfg, stats, fit, val_ood, exec);
      point.val_auroc = auroc(id.scores, ood.scores);
      if (!best || *point.val_auroc > *best) {
        best = point.val_auroc;
        out.selected = cfg;
        out.selected_index = out.table.size();
      }
    } catch (const Error& e) {
      point.error = e.what();
    }
    out.table.push_back(std::move(point));
  }
  if (!best) {
    throw Error(ErrorCode::kInvalidArgument,
                "every grid point failed for " + std::string(method_id(spec.method)) + ": " + out.table.front().error);
  }
  return out;
}

const char* to_string(DumpLoader::Phase phase) {
  switch (phase) {
    case DumpLoader::Phase::kFit: return "fit";
    case DumpLoader::Phase::kSweep: return "sweep";
    case DumpLoader::Phase::kTest: return "test";
  }
  return "?";
}

void DumpLoader::begin_phase(Phase phase, std::set<fs::path> denied) {
  phase_ = phase;
  denied_.clear();
  for (const auto& p : denied) denied_.insert(p.lexically_normal());
}

void DumpLoader::check(const fs::path& path) {
  const fs::path p = path.lexically_normal();
  const bool denied = denied_.count(p) != 0;
  accesses_.push_back({phase_, p, denied});
  if (denied) {
    throw Error(ErrorCode::kAccessDenied,
                "access denied: " + p.string() + " may not be read during the " + to_string(phase_) + " phase");
  }
}

DumpContents DumpLoader::load_dump(const fs::path& path) {
  check(path);
  return read_dump_file(path);
}

LinearHead DumpLoader::load_head(const fs::path& path) {
  check(path);
  return read_head_file(path);
}

FittedStats fit_run(const BenchmarkManifest& manifest, std::size_t backbone, std::size_t seed,
                    const std::vector<Method>& methods, const HarnessOptions& options, std::vector<std::string>* failed) {
  DumpLoader loader;
  const RunPaths& run = manifest.run(backbone, seed);
  loader.begin_phase(DumpLoader::Phase::kFit, {run.id_test});
  const LinearHead head = loader.load_head(run.head);
  EvalData train = to_eval(loader.load_dump(run.id_train));
  EvalData val = to_eval(loader.load_dump(run.id_val));

  FitInputs fit{&train.features, &val.features, &head, options.fit};
  fit.options.seed = run_seed(options.seed, backbone, seed, 1);
  FittedStats stats;
  for (Method m : methods) {
    const MethodConfig cfg(m);
    try {
      const auto scores = score_data(cfg, stats, fit, val, options.exec);
      stats.thresholds[std::string(method_id(m))] = calibrate_threshold(scores.scores, 0.95, std::string(method_id(m)));
    } catch (const Error& e) {
      if (failed) failed->push_back(std::string(method_id(m)) + ": " + e.what());
    }
  }
  return stats;
}

EvalReport run_benchmark(const BenchmarkManifest& manifest, const std::vector<Method>& methods,
                         const HarnessOptions& options, DumpLoader* loader) {
  DumpLoader default_loader;
  DumpLoader& io = loader ? *loader : default_loader;

  EvalReport report;
  for (Method m : methods) report.methods.emplace_back(method_id(m));
  report.backbones = manifest.backbones;
  report.seeds = manifest.seeds;
  report.groups = manifest.group_names();

  for (std::size_t b = 0; b < manifest.backbones.size(); ++b) {
    for (std::size_t s = 0; s < manifest.seeds.size(); ++s) {
      const RunPaths& run = manifest.run(b, s);
      const std::string& bb = manifest.backbones[b];
      const std::string& sd = manifest.seeds[s];

      auto fail_all = [&](const std::string& why) {
        report.failures.push_back(bb + " " + sd + ": " + why);
        if (options.sweep_only) return;
        for (Method m : methods) {
          for (const auto& g : run.ood_groups) {
            report.rows.push_back({std::string(method_id(m)), bb, sd, g.name, std::nullopt, "", "failed: " + why});
          }
        }
      };

      // Fit phase: training and validation ID data plus the head.
      std::optional<LinearHead> head;
      EvalData train, val;
      OodData ood;
      try {
        io.begin_phase(DumpLoader::Phase::kFit, {run.id_test});
        head = io.load_head(run.head);
        train = to_eval(io.load_dump(run.id_train));
        val = to_eval(io.load_dump(run.id_val));

        // Sweep phase: OoD dumps are split; the ID test dump stays closed.
        io.begin_phase(DumpLoader::Phase::kSweep, {run.id_test});
        std::vector<EvalData> val_parts;
        std::size_t dataset_index = 0;
        for (const auto& g : run.ood_groups) {
          std::vector<EvalData> tests;
          for (const auto& path : g.datasets) {
            EvalData all = to_eval(io.load_dump(path));
            const auto split = holdout_split(all.features.size(), options.ood_val_fraction,
                                             run_seed(options.seed, b, s, 1000 + dataset_index++));
            val_parts.push_back(subset(all, split.val));
            tests.push_back(subset(all, split.test));
          }
          ood.test.push_back(std::move(tests));
        }
        ood.val = concat(val_parts);
      } catch (const Error& e) {
        fail_all(e.what());
        continue;
      }

      FitInputs fit{&train.features, &val.features, &*head, options.fit};
      fit.options.seed = run_seed(options.seed, b, s, 1);
      FittedStats stats;
      std::vector<std::optional<MethodConfig>> selected(methods.size());
      std::vector<std::string> method_error(methods.size());
      for (std::size_t k = 0; k < methods.size(); ++k) {
        const Method m = methods[k];
        const auto it = options.sweeps.find(m);
        const SweepSpec spec = it != options.sweeps.end() ? it->second : default_sweep(m, train.features.dim());
        try {
          const SweepOutcome outcome = sweep(spec, stats, fit, val, ood.val, options.exec);
          for (std::size_t p = 0; p < outcome.table.size(); ++p) {
            const auto& point = outcome.table[p];
            report.sweeps.push_back({std::string(method_id(m)), bb, sd, point.config.describe(), point.val_auroc,
                                     point.error.empty() ? "ok" : "failed: " + point.error,
                                     p == outcome.selected_index});
          }
          selected[k] = outcome.selected;
        } catch (const Error& e) {
          method_error[k] = e.what();
          report.sweeps.push_back({std::string(method_id(m)), bb, sd, "", std::nullopt,
                                   std::string("failed: ") + e.what(), false});
        }
      }
      if (options.sweep_only) continue;

      // Test phase.
      EvalData test;
      try {
        io.begin_phase(DumpLoader::Phase::kTest);
        test = to_eval(io.load_dump(run.id_test));
      } catch (const Error& e) {
        fail_all(e.what());
        continue;
      }
      std::optional<double> acc;
      if (test.features.labels) {
        try {
          acc = accuracy(logits_or_head(test.features, &*head), *test.features.labels);
        } catch (const Error&) {
        }
      }
      for (std::size_t k = 0; k < methods.size(); ++k) {
        const std::string id(method_id(methods[k]));
        std::vector<CellRow> cells;
        try {
          if (!selected[k]) throw Error(ErrorCode::kInvalidArgument, method_error[k]);
          const MethodConfig& cfg = *selected[k];
          const auto id_scores = score_data(cfg, stats, fit, test, options.exec);
          for (std::size_t g = 0; g < run.ood_groups.size(); ++g) {
            std::vector<MetricRow> per_dataset;
            for (const auto& ds : ood.test[g]) {
              const auto ood_scores = score_data(cfg, stats, fit, ds, options.exec);
              per_dataset.push_back(evaluate_scores(id_scores.scores, ood_scores.scores));
            }
            MetricRow row = average_rows(per_dataset);
            row.acc = acc;
            cells.push_back({id, bb, sd, run.ood_groups[g].name, row, cfg.describe(), "ok"});
          }
        } catch (const Error& e) {
          cells.clear();
          for (const auto& g : run.ood_groups) {
            cells.push_back({id, bb, sd, g.name, std::nullopt, selected[k] ? selected[k]->describe() : "",
                             std::string("failed: ") + e.what()});
          }
        }
        for (auto& c : cells) report.rows.push_back(std::move(c));
      }
    }
  }
  finalize_report(report);
  return report;
}

std::vector<CorrelationRow> correlation_study(const EvalReport& report,
                                              const std::map<std::string, double>& acc_by_backbone) {
  std::vector<CorrelationRow> out;
  for (const auto& g : report.groups) {
    CorrelationRow row{g, std::nullopt, 0, ""};
    std::vector<double> acc, auc;
    for (const auto& m : report.methods) {
      for (const auto& b : report.backbones) {
        const AggregateRow* a = report.aggregate(m, b, g);
        if (!a || !a->summary) continue;
        std::optional<double> x;
        if (auto it = acc_by_backbone.find(b); it != acc_by_backbone.end()) {
          x = it->second;
        } else if (a->summary->acc) {
          x = a->summary->acc->mean;
        }
        if (!x) continue;
        acc.push_back(*x);
        auc.push_back(a->summary->auroc.mean);
      }
    }
    row.n = acc.size();
    try {
      row.rho = spearman_rho(acc, auc);
    } catch (const Error& e) {
      row.note = e.what();
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace oodkit
