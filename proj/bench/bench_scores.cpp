// Serial reference vs OpenMP kernels on one synthetic run.

#include <benchmark/benchmark.h>

#include "oodkit/harness.hpp"
#include "oodkit/synthetic.hpp"

using namespace oodkit;

namespace {

struct Fixture {
  SyntheticRun run;
  FittedStats stats;
  FitInputs fit;

  Fixture() {
    SyntheticSpec spec;
    spec.classes = 10;
    spec.dim = 128;
    spec.n_train = 4000;
    spec.n_val = 500;
    spec.n_test = 2000;
    spec.n_ood = 10;
    run = generate_synthetic_run(spec, 0, 0);
    fit = FitInputs{&run.train, &run.val.features, &run.head, {}};
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

void BM_Score(benchmark::State& state, Method m, Execution exec) {
  auto& f = fixture();
  const MethodConfig cfg(m);
  EvalData data{f.run.test.features, f.run.test.augmented};
  score_data(cfg, f.stats, f.fit, data, exec);  // fit outside the timed loop
  for (auto _ : state) {
    benchmark::DoNotOptimize(score_data(cfg, f.stats, f.fit, data, exec));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(data.features.size()));
}

void register_all() {
  for (Method m : {Method::kMahalanobis, Method::kRmds, Method::kKnn, Method::kFdbd, Method::kVim,
                   Method::kRelation, Method::kRankFeat, Method::kDice, Method::kEnergy, Method::kGradNorm}) {
    const std::string id(method_id(m));
    benchmark::RegisterBenchmark((id + "/serial").c_str(), BM_Score, m, Execution::kSerial)
        ->Unit(benchmark::kMillisecond);
    benchmark::RegisterBenchmark((id + "/parallel").c_str(), BM_Score, m, Execution::kParallel)
        ->Unit(benchmark::kMillisecond);
  }
}

}  // namespace

int main(int argc, char** argv) {
  register_all();
  benchmark::Initialize(&argc, argv);
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
