#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>

#include "fixtures.hpp"
#include "oodkit/harness.hpp"
#include "oodkit/metrics.hpp"
#include "oodkit/synthetic.hpp"

using namespace oodkit;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.classes = 4;
  s.dim = 12;
  s.n_train = 240;
  s.n_val = 80;
  s.n_test = 120;
  s.n_ood = 100;
  s.backbones = {"net-a", "net-b"};
  s.seeds = 2;
  s.dropout_passes = 3;
  s.seed = 11;
  return s;
}

const std::vector<Method> kMethods{Method::kMsp, Method::kMahalanobis, Method::kKnn};

HarnessOptions small_options() {
  HarnessOptions o;
  o.seed = 5;
  o.sweeps[Method::kKnn] = SweepSpec{Method::kKnn, {{"K", {1, 5}}}};
  return o;
}

const BenchmarkManifest& shared_benchmark() {
  static const BenchmarkManifest m = gen_synthetic_benchmark(small_spec(), fixtures::temp_dir("harness_bench"));
  return m;
}

EvalData eval_of(const SyntheticDataset& d) { return EvalData{d.features, d.augmented}; }

}  // namespace

TEST_CASE("holdout split") {
  const auto a = holdout_split(100, 0.2, 3);
  CHECK(a.val.size() == 20);
  CHECK(a.test.size() == 80);
  CHECK(std::is_sorted(a.val.begin(), a.val.end()));
  std::vector<std::size_t> all = a.val;
  all.insert(all.end(), a.test.begin(), a.test.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);

  CHECK(holdout_split(100, 0.2, 3).val == a.val);
  CHECK(holdout_split(100, 0.2, 4).val != a.val);
  CHECK(holdout_split(2, 0.2, 0).val.size() == 1);
  CHECK(holdout_split(3, 0.99, 0).test.size() == 1);
  CHECK_THROWS_AS(holdout_split(1, 0.2, 0), Error);
  CHECK_THROWS_AS(holdout_split(10, 0.0, 0), Error);
  CHECK_THROWS_AS(holdout_split(10, 1.0, 0), Error);
}

TEST_CASE("grid expansion") {
  const SweepSpec spec{Method::kGen, {{"gamma", {0.1, 0.5}}, {"M", {2, 3, 4}}}};
  const auto grid = expand_grid(spec);
  REQUIRE(grid.size() == 6);
  CHECK(grid[0].describe() == "M=2;gamma=0.1");
  CHECK(grid[1].describe() == "M=3;gamma=0.1");
  CHECK(grid[3].describe() == "M=2;gamma=0.5");
  CHECK(expand_grid(SweepSpec{Method::kMsp, {}}).size() == 1);
  CHECK_THROWS_AS(expand_grid(SweepSpec{Method::kGen, {{"gamma", {2.0}}}}), Error);
  CHECK_THROWS_AS(expand_grid(SweepSpec{Method::kGen, {{"gamma", {}}}}), Error);

  CHECK(default_sweep(Method::kVim, 200).grid.at(0).values == std::vector<double>{64, 128});
  CHECK(default_sweep(Method::kVim, 32).grid.empty());
  CHECK(expand_grid(default_sweep(Method::kGen, 512)).size() == 9);
}

TEST_CASE("sweep selection") {
  auto spec = small_spec();
  spec.backbones = {"x"};
  spec.seeds = 1;
  const auto run = generate_synthetic_run(spec, 0, 0);
  const EvalData val_id = eval_of(run.val);
  const EvalData far = eval_of(run.ood[1].second);
  FitInputs fit{&run.train, &run.val.features, &run.head, {}};

  SUBCASE("singleton grid") {
    FittedStats stats;
    const auto out = sweep(SweepSpec{Method::kMsp, {}}, stats, fit, val_id, far);
    CHECK(out.table.size() == 1);
    CHECK(out.selected_index == 0);
    CHECK(out.selected == MethodConfig(Method::kMsp));
  }
  SUBCASE("the better polarity wins") {
    FittedStats stats;
    const auto out = sweep(SweepSpec{Method::kFdbd, {{"negate", {0, 1}}}}, stats, fit, val_id, far);
    REQUIRE(out.table.size() == 2);
    const double a = *out.table[0].val_auroc, b = *out.table[1].val_auroc;
    CHECK(a + b == doctest::Approx(100.0));
    CHECK(out.selected_index == (b > a ? 1u : 0u));
    CHECK(*out.table[out.selected_index].val_auroc == std::max(a, b));
  }
  SUBCASE("a perfectly separating point is selected") {
    // ID lies in the x3 = 0 plane with a wide x2 spread; OoD sits at x3 = 5
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0.0, 1.0);
    EvalData id, ood;
    id.features.features.resize(200, 3);
    ood.features.features.resize(200, 3);
    for (Eigen::Index i = 0; i < 200; ++i) {
      id.features.features.row(i) << 20 * g(rng), 10 * g(rng), 0.0;
      ood.features.features.row(i) << 20 * g(rng), 10 * g(rng), 5.0;
    }
    LinearHead h;
    h.weights = RowMatrix::Ones(2, 3);
    h.bias = Vector::Zero(2);
    FitInputs f{&id.features, &id.features, &h, {}};
    FittedStats stats;
    const auto out = sweep(SweepSpec{Method::kResidual, {{"dim", {1, 2}}}}, stats, f, id, ood);
    CHECK(*out.table[0].val_auroc < 100.0);
    CHECK(*out.table[1].val_auroc == 100.0);
    CHECK(out.selected_index == 1);
    CHECK(out.selected.get("dim") == 2);
  }
  SUBCASE("ties keep the first point") {
    FittedStats stats;
    // identical configurations give identical AUROC
    const auto out = sweep(SweepSpec{Method::kEnergy, {{"T", {1, 1, 1}}}}, stats, fit, val_id, far);
    CHECK(out.table.size() == 3);
    CHECK(out.selected_index == 0);
  }
  SUBCASE("every point failing throws") {
    FittedStats stats;
    EvalData no_aug = val_id;
    no_aug.augmented.reset();
    EvalData far_no_aug = far;
    far_no_aug.augmented.reset();
    CHECK_THROWS_AS(sweep(SweepSpec{Method::kOdin, {}}, stats, fit, no_aug, far_no_aug), Error);
  }
}

TEST_CASE("manifest round-trip") {
  const auto& m = shared_benchmark();
  const auto dir = m.run(0, 0).id_train.parent_path().parent_path().parent_path();
  CHECK(missing_paths(m).empty());
  const auto loaded = load_manifest(dir / "manifest.json");
  CHECK(loaded.backbones == m.backbones);
  CHECK(loaded.seeds == m.seeds);
  CHECK(loaded.group_names() == std::vector<std::string>{"near", "far_bp", "far_general"});
  CHECK(loaded.run(1, 1).id_test == m.run(1, 1).id_test);
  CHECK(manifest_to_json(loaded, dir) == manifest_to_json(m, dir));
  CHECK(manifest_to_json(loaded, dir).find(dir.string()) == std::string::npos);

  const std::string ints = R"({"backbones":["r"],"seeds":[0],"runs":{"r":{"0":{
    "id_train":"a.oodf","id_val":"b.oodf","id_test":"c.oodf","head":"h.oodh",
    "ood_groups":{"near":["n.oodf"]}}}}})";
  const auto p = parse_manifest(ints, "/data");
  CHECK(p.seeds == std::vector<std::string>{"0"});
  CHECK(p.run(0, 0).id_train == std::filesystem::path("/data/a.oodf"));
  CHECK(missing_paths(p).size() == 5);

  CHECK_THROWS_AS(parse_manifest(R"({"backbones":["r","q"],"seeds":[0],"runs":{"r":{"0":{
    "id_train":"a","id_val":"b","id_test":"c","head":"h","ood_groups":{"near":["n"]}}}}})", "/"), Error);
  CHECK_THROWS_AS(parse_manifest(R"({"backbones":["r","r"],"seeds":[0],"runs":{}})", "/"), Error);
  CHECK_THROWS_AS(parse_manifest(R"({"backbones":["r"],"seeds":[0],"runs":{"r":{"0":{
    "id_train":"a","id_val":"b","id_test":"c","head":"h","ood_groups":{"near":[]}}}}})", "/"), Error);
  CHECK_THROWS_AS(parse_manifest("{", "/"), Error);
}

TEST_CASE("benchmark rows, aggregates and access log") {
  const auto& m = shared_benchmark();
  DumpLoader loader;
  const auto report = run_benchmark(m, kMethods, small_options(), &loader);

  CHECK(report.rows.size() == 2 * 2 * 3 * 3);
  CHECK(report.failures.empty());
  for (const auto& r : report.rows) {
    CHECK(r.status == "ok");
    REQUIRE(r.metrics);
    CHECK(r.metrics->n_id == 120);
    CHECK(r.metrics->n_ood == 80);
    CHECK(r.metrics->acc.has_value());
  }
  for (const auto& a : report.aggregates) {
    REQUIRE(a.summary);
    CHECK(a.summary->runs == 2);
  }
  CHECK(report.aggregates.size() == 3 * 2 * 3);
  // knn sweeps two points per run, msp and mahalanobis one
  CHECK(report.sweeps.size() == 2 * 2 * (1 + 1 + 2));

  std::size_t test_reads = 0;
  for (const auto& a : loader.accesses()) {
    CHECK_FALSE(a.denied);
    const bool is_test = a.path.filename() == "test.oodf";
    if (is_test) {
      ++test_reads;
      CHECK(a.phase == DumpLoader::Phase::kTest);
    }
  }
  CHECK(test_reads == 4);
}

TEST_CASE("id_test is closed during the sweep") {
  const auto& m = shared_benchmark();
  const auto& run = m.run(0, 0);
  DumpLoader loader;
  loader.begin_phase(DumpLoader::Phase::kSweep, {run.id_test});
  try {
    loader.load_dump(run.id_test);
    FAIL("expected access denied");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kAccessDenied);
  }
  CHECK_NOTHROW(loader.load_dump(run.ood_groups[0].datasets[0]));
  REQUIRE(loader.accesses().size() == 2);
  CHECK(loader.accesses()[0].denied);
  loader.begin_phase(DumpLoader::Phase::kTest);
  CHECK_NOTHROW(loader.load_dump(run.id_test));

  // a loader that peeks at the test file mid-sweep makes the run fail
  struct Peeking : DumpLoader {
    DumpContents read_dump_file(const std::filesystem::path& p) override {
      if (phase() == Phase::kSweep) {
        // the test dump of whichever run is in progress
        load_dump(p.parent_path().parent_path() / "test.oodf");
      }
      return DumpLoader::read_dump_file(p);
    }
  } peeking;
  auto opts = small_options();
  const auto report = run_benchmark(m, {Method::kMsp}, opts, &peeking);
  CHECK(report.failures.size() == 4);
  CHECK(report.failures[0].find("access denied") != std::string::npos);
  for (const auto& r : report.rows) CHECK_FALSE(r.ok());
}

TEST_CASE("benchmark is deterministic") {
  const auto& m = shared_benchmark();
  const auto a = run_benchmark(m, kMethods, small_options());
  const auto b = run_benchmark(m, kMethods, small_options());
  CHECK(results_csv(a) == results_csv(b));
  CHECK(sweeps_csv(a) == sweeps_csv(b));
  CHECK(text_report(a) == text_report(b));

  auto serial = small_options();
  serial.exec = Execution::kSerial;
  const auto c = run_benchmark(m, kMethods, serial);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(c.rows[i].metrics->auroc == doctest::Approx(a.rows[i].metrics->auroc).epsilon(1e-9));
  }
}

TEST_CASE("sweep-only stops before the test phase") {
  const auto& m = shared_benchmark();
  auto opts = small_options();
  opts.sweep_only = true;
  DumpLoader loader;
  const auto report = run_benchmark(m, kMethods, opts, &loader);
  CHECK(report.rows.empty());
  CHECK_FALSE(report.sweeps.empty());
  for (const auto& a : loader.accesses()) CHECK(a.path.filename() != "test.oodf");
}

TEST_CASE("failures stay inside their run") {
  auto spec = small_spec();
  spec.backbones = {"net-a"};
  const auto dir = fixtures::temp_dir("harness_corrupt");
  const auto m = gen_synthetic_benchmark(spec, dir);
  // truncate one test dump
  const auto victim = m.run(0, 1).id_test;
  const auto size = std::filesystem::file_size(victim);
  std::filesystem::resize_file(victim, size - 7);

  const auto report = run_benchmark(m, kMethods, small_options());
  CHECK(report.rows.size() == 2 * 3 * 3);
  for (const auto& r : report.rows) {
    if (r.seed == "s1") {
      CHECK_FALSE(r.ok());
      CHECK(r.status.rfind("failed: ", 0) == 0);
    } else {
      CHECK(r.ok());
    }
  }
  REQUIRE(report.failures.size() == 1);
  CHECK(report.failures[0].find("net-a s1") == 0);
  for (const auto& a : report.aggregates) {
    CHECK_FALSE(a.summary);
    CHECK(a.missing_seeds == std::vector<std::string>{"s1"});
  }

  // a method that cannot run fails alone
  auto opts = small_options();
  opts.sweeps[Method::kOdin] = SweepSpec{Method::kOdin, {{"T", {0.0}}}};
  const auto r2 = run_benchmark(gen_synthetic_benchmark(spec, fixtures::temp_dir("harness_method")),
                                {Method::kMsp, Method::kOdin}, opts);
  CHECK(r2.failures.empty());
  for (const auto& r : r2.rows) CHECK(r.ok() == (r.method == "msp"));
}

TEST_CASE("fit_run calibrates thresholds") {
  const auto& m = shared_benchmark();
  std::vector<std::string> failed;
  const auto stats = fit_run(m, 0, 0, {Method::kMsp, Method::kEnergy, Method::kMahalanobis}, {}, &failed);
  CHECK(failed.empty());
  CHECK(stats.thresholds.size() == 3);
  CHECK(stats.class_means.has_value());
}

TEST_CASE("accuracy versus AUROC correlation") {
  EvalReport r;
  r.methods = {"msp", "energy"};
  r.backbones = {"a", "b", "c"};
  r.seeds = {"0"};
  r.groups = {"near", "far_bp"};
  const std::map<std::string, double> acc{{"a", 90}, {"b", 92}, {"c", 95}};
  auto add = [&](const std::string& m, const std::string& b, const std::string& g, double auroc) {
    CellRow row{m, b, "0", g, MetricRow{}, "", "ok"};
    row.metrics->auroc = auroc;
    row.metrics->acc = acc.at(b);
    r.rows.push_back(row);
  };
  // near rises with accuracy, far falls
  add("msp", "a", "near", 80);
  add("msp", "b", "near", 81);
  add("msp", "c", "near", 85);
  add("energy", "a", "near", 70);
  add("energy", "b", "near", 84);
  add("energy", "c", "near", 90);
  add("msp", "a", "far_bp", 99);
  add("msp", "b", "far_bp", 95);
  add("msp", "c", "far_bp", 91);
  add("energy", "a", "far_bp", 97);
  add("energy", "b", "far_bp", 93);
  add("energy", "c", "far_bp", 90);
  finalize_report(r);

  const auto rows = correlation_study(r);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].group == "near");
  CHECK(rows[0].n == 6);
  // ties in accuracy lower |rho| below 1 unless AUROC agrees with the ranks
  const std::vector<double> x{90, 92, 95, 90, 92, 95};
  CHECK(*rows[0].rho == doctest::Approx(spearman_rho(x, std::vector<double>{80, 81, 85, 70, 84, 90})));
  CHECK(*rows[1].rho < 0);

  const auto single = correlation_study(r, {{"a", 90}, {"b", 92}, {"c", 95}});
  CHECK(*single[1].rho == doctest::Approx(spearman_rho(x, std::vector<double>{99, 95, 91, 97, 93, 90})));

  EvalReport one;
  one.methods = {"msp"};
  one.backbones = {"a", "b", "c"};
  one.seeds = {"0"};
  one.groups = {"near"};
  for (auto [b, au] : std::vector<std::pair<std::string, double>>{{"a", 60}, {"b", 70}, {"c", 80}}) {
    CellRow row{"msp", b, "0", "near", MetricRow{}, "", "ok"};
    row.metrics->auroc = au;
    row.metrics->acc = acc.at(b);
    one.rows.push_back(row);
  }
  finalize_report(one);
  CHECK(*correlation_study(one)[0].rho == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*correlation_study(one, {{"a", 99}, {"b", 98}, {"c", 97}})[0].rho == doctest::Approx(-1.0).epsilon(1e-12));
  const auto none = correlation_study(one, {{"a", 1}, {"b", 1}, {"c", 1}});
  CHECK_FALSE(none[0].rho);
  CHECK_FALSE(none[0].note.empty());
}
