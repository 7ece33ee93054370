// oodkit command line: gen-synth | fit | sweep | score | eval | report

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "oodkit/dump_io.hpp"
#include "oodkit/harness.hpp"
#include "oodkit/parallel.hpp"
#include "oodkit/report.hpp"
#include "oodkit/stats_io.hpp"
#include "oodkit/synthetic.hpp"

namespace fs = std::filesystem;
using namespace oodkit;

namespace {

struct Common {
  std::string manifest;
  std::string methods = "all";
  std::string out;
  std::uint64_t seed = 0;
  int jobs = 0;
  std::vector<std::string> grids;
};

void add_common(CLI::App* app, Common& c, bool needs_manifest) {
  auto* m = app->add_option("--manifest", c.manifest, "benchmark manifest (JSON)");
  if (needs_manifest) m->required()->check(CLI::ExistingFile);
  app->add_option("--methods", c.methods, "comma-separated method ids or 'all'");
  app->add_option("--out", c.out, "output directory")->required();
  app->add_option("--seed", c.seed, "base seed for splits and subsampling");
  app->add_option("--jobs", c.jobs, "worker threads (0 = runtime default)");
}

/// "gen.gamma=0.01,0.1" -> grid axis for gen
std::map<Method, SweepSpec> parse_grids(const std::vector<std::string>& specs) {
  std::map<Method, SweepSpec> out;
  for (const auto& s : specs) {
    const auto dot = s.find('.');
    const auto eq = s.find('=');
    if (dot == std::string::npos || eq == std::string::npos || eq < dot) {
      throw Error(ErrorCode::kInvalidArgument, "grid must look like method.param=v1,v2: " + s);
    }
    const Method m = parse_method(s.substr(0, dot));
    GridAxis axis{s.substr(dot + 1, eq - dot - 1), {}};
    std::stringstream values(s.substr(eq + 1));
    std::string v;
    while (std::getline(values, v, ',')) axis.values.push_back(std::stod(v));
    auto [it, inserted] = out.try_emplace(m, SweepSpec{m, {}});
    it->second.grid.push_back(std::move(axis));
  }
  for (const auto& [m, spec] : out) expand_grid(spec);  // validate ranges up front
  return out;
}

HarnessOptions options_from(const Common& c) {
  HarnessOptions opt;
  opt.seed = c.seed;
  opt.sweeps = parse_grids(c.grids);
  return opt;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

int cmd_gen_synth(const Common& c, SyntheticSpec spec, const std::string& backbones) {
  spec.seed = c.seed;
  spec.backbones.clear();
  std::stringstream ss(backbones);
  std::string b;
  while (std::getline(ss, b, ',')) {
    if (!b.empty()) spec.backbones.push_back(b);
  }
  const auto m = gen_synthetic_benchmark(spec, c.out);
  std::cout << "wrote " << (fs::path(c.out) / "manifest.json").string() << " (" << m.backbones.size()
            << " backbones x " << m.seeds.size() << " seeds)\n";
  return 0;
}

int cmd_fit(const Common& c) {
  const auto manifest = load_manifest(c.manifest);
  const auto methods = parse_method_list(c.methods);
  const auto opt = options_from(c);
  bool failed_any = false;
  for (std::size_t b = 0; b < manifest.backbones.size(); ++b) {
    for (std::size_t s = 0; s < manifest.seeds.size(); ++s) {
      const fs::path dir = fs::path(c.out) / manifest.backbones[b];
      const fs::path path = dir / (manifest.seeds[s] + ".oods");
      try {
        std::vector<std::string> failed;
        const auto stats = fit_run(manifest, b, s, methods, opt, &failed);
        fs::create_directories(dir);
        save_stats(stats, path);
        std::cout << path.string() << ": " << stats.thresholds.size() << " methods fitted\n";
        for (const auto& f : failed) std::cerr << "  failed " << f << "\n";
        failed_any = failed_any || !failed.empty();
      } catch (const Error& e) {
        std::cerr << manifest.backbones[b] << " " << manifest.seeds[s] << ": " << e.what() << "\n";
        failed_any = true;
      }
    }
  }
  return failed_any ? 1 : 0;
}

int cmd_sweep(const Common& c) {
  const auto manifest = load_manifest(c.manifest);
  auto opt = options_from(c);
  opt.sweep_only = true;
  const auto report = run_benchmark(manifest, parse_method_list(c.methods), opt);
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "sweeps.csv", sweeps_csv(report));
  bool failed = !report.failures.empty();
  for (const auto& s : report.sweeps) {
    if (s.selected) std::cout << s.method << " " << s.backbone << " " << s.seed << ": " << s.config << "\n";
    if (s.config.empty() && s.status != "ok") failed = true;
  }
  for (const auto& f : report.failures) std::cerr << "failed " << f << "\n";
  return failed ? 1 : 0;
}

std::string scores_csv(const std::vector<ScoreVector>& scores, std::size_t n) {
  std::ostringstream os;
  os << "index";
  for (const auto& s : scores) os << ',' << s.method;
  os << '\n';
  os.precision(17);
  for (std::size_t i = 0; i < n; ++i) {
    os << i;
    for (const auto& s : scores) os << ',' << s.scores[i];
    os << '\n';
  }
  return os.str();
}

int cmd_score(const Common& c, const std::string& dump, const std::string& head_path, const std::string& stats_path,
              const std::string& train_path) {
  const auto methods = parse_method_list(c.methods);
  bool failed = false;

  auto score_one = [&](const EvalData& data, FittedStats& stats, const FitInputs& fit, const fs::path& out) {
    std::vector<ScoreVector> columns;
    for (Method m : methods) {
      try {
        columns.push_back(score_data(MethodConfig(m), stats, fit, data));
      } catch (const Error& e) {
        std::cerr << out.string() << ": " << method_id(m) << " failed: " << e.what() << "\n";
        failed = true;
      }
    }
    fs::create_directories(out.parent_path());
    write_text(out, scores_csv(columns, data.features.size()));
  };

  if (!dump.empty()) {
    if (head_path.empty()) throw Error(ErrorCode::kMissingInput, "--dump needs --head");
    const LinearHead head = read_head(head_path);
    auto contents = read_dump(dump);
    EvalData data{std::move(contents.features), std::move(contents.augmented)};
    FittedStats stats = stats_path.empty() ? FittedStats{} : load_stats(stats_path, data.features.dim());
    std::optional<FeatureSet> train;
    if (!train_path.empty()) train = read_dump(train_path).features;
    FitInputs fit{train ? &*train : nullptr, nullptr, &head, {}};
    fit.options.seed = c.seed;
    score_one(data, stats, fit, fs::path(c.out) / (fs::path(dump).stem().string() + ".csv"));
    return failed ? 1 : 0;
  }

  if (c.manifest.empty()) throw Error(ErrorCode::kMissingInput, "score needs --manifest or --dump");
  const auto manifest = load_manifest(c.manifest);
  for (std::size_t b = 0; b < manifest.backbones.size(); ++b) {
    for (std::size_t s = 0; s < manifest.seeds.size(); ++s) {
      const auto& run = manifest.run(b, s);
      try {
        const LinearHead head = read_head(run.head);
        const FeatureSet train = read_dump(run.id_train).features;
        const FeatureSet val = read_dump(run.id_val).features;
        FitInputs fit{&train, &val, &head, {}};
        fit.options.seed = c.seed;
        FittedStats stats;
        const fs::path dir = fs::path(c.out) / manifest.backbones[b] / manifest.seeds[s];
        auto load = [](const fs::path& p) {
          auto contents = read_dump(p);
          return EvalData{std::move(contents.features), std::move(contents.augmented)};
        };
        score_one(load(run.id_test), stats, fit, dir / "id_test.csv");
        for (const auto& g : run.ood_groups) {
          for (const auto& p : g.datasets) score_one(load(p), stats, fit, dir / g.name / (p.stem().string() + ".csv"));
        }
      } catch (const Error& e) {
        std::cerr << manifest.backbones[b] << " " << manifest.seeds[s] << ": " << e.what() << "\n";
        failed = true;
      }
    }
  }
  return failed ? 1 : 0;
}

std::string correlation_csv(const std::vector<CorrelationRow>& rows) {
  std::ostringstream os;
  os << "ood_group,rho,n,note\n";
  os.precision(12);
  for (const auto& r : rows) {
    os << r.group << ',';
    if (r.rho) os << *r.rho;
    os << ',' << r.n << ',' << r.note << '\n';
  }
  return os.str();
}

int cmd_eval(const Common& c) {
  const auto manifest = load_manifest(c.manifest);
  const auto report = run_benchmark(manifest, parse_method_list(c.methods), options_from(c));
  emit_report(report, c.out);
  write_text(fs::path(c.out) / "correlation.csv", correlation_csv(correlation_study(report)));
  std::cout << text_report(report);
  return report.any_failure() ? 1 : 0;
}

int cmd_report(const Common& c, const std::string& in) {
  std::ifstream file(in, std::ios::binary);
  if (!file) throw Error(ErrorCode::kIo, "cannot open " + in);
  std::stringstream ss;
  ss << file.rdbuf();
  const auto report = report_from_json(ss.str());
  emit_report(report, c.out);
  write_text(fs::path(c.out) / "correlation.csv", correlation_csv(correlation_study(report)));
  std::cout << text_report(report);
  return report.any_failure() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"post-hoc out-of-distribution detection toolkit"};
  app.require_subcommand(1);

  Common common;
  SyntheticSpec synth;
  std::string backbones = "synth-a";
  std::string dump, head, stats, train, report_in;

  auto* gen = app.add_subcommand("gen-synth", "write a synthetic benchmark (dumps, heads, manifest)");
  add_common(gen, common, false);
  gen->add_option("--classes", synth.classes);
  gen->add_option("--dim", synth.dim);
  gen->add_option("--class-spread", synth.class_spread);
  gen->add_option("--near-shift", synth.near_shift);
  gen->add_option("--far-shift", synth.far_shift);
  gen->add_option("--heavy-tail-df", synth.heavy_tail_df, "Student-t dof for far_general noise; 0 = Gaussian");
  gen->add_option("--n-train", synth.n_train);
  gen->add_option("--n-val", synth.n_val);
  gen->add_option("--n-test", synth.n_test);
  gen->add_option("--n-ood", synth.n_ood);
  gen->add_option("--backbones", backbones, "comma-separated backbone ids");
  gen->add_option("--seeds", synth.seeds, "number of seeds per backbone");

  auto* fit = app.add_subcommand("fit", "fit statistics per (backbone, seed) and save .oods bundles");
  add_common(fit, common, true);

  auto* sweep_cmd = app.add_subcommand("sweep", "run hyperparameter sweeps on the validation split");
  add_common(sweep_cmd, common, true);
  sweep_cmd->add_option("--grid", common.grids, "override a grid, e.g. gen.gamma=0.01,0.1");

  auto* score = app.add_subcommand("score", "write per-sample scores as CSV");
  add_common(score, common, false);
  score->add_option("--dump", dump, "score a single .oodf instead of a manifest")->check(CLI::ExistingFile);
  score->add_option("--head", head, "linear head (.oodh) for --dump")->check(CLI::ExistingFile);
  score->add_option("--stats", stats, "fitted statistics (.oods) for --dump")->check(CLI::ExistingFile);
  score->add_option("--train", train, "training dump to fit missing statistics")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "run the full protocol and emit reports");
  add_common(eval, common, true);
  eval->add_option("--grid", common.grids, "override a grid, e.g. gen.gamma=0.01,0.1");

  auto* rep = app.add_subcommand("report", "re-emit tables from a saved report.json");
  add_common(rep, common, false);
  rep->add_option("--report", report_in, "report.json written by eval")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    set_worker_count(common.jobs);
    if (*gen) return cmd_gen_synth(common, synth, backbones);
    if (*fit) return cmd_fit(common);
    if (*sweep_cmd) return cmd_sweep(common);
    if (*score) return cmd_score(common, dump, head, stats, train);
    if (*eval) return cmd_eval(common);
    if (*rep) return cmd_report(common, report_in);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
