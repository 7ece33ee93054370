#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oodkit/manifest.hpp"
#include "oodkit/types.hpp"

namespace oodkit {

/// Gaussian-mixture stand-in for a trained backbone. Features are
/// offset + class mean + noise in a random orthonormal frame, passed through
/// a ReLU. OoD samples are class samples moved by the shift, in within-class
/// standard deviations, partly towards the centroid of the class means and
/// partly along directions unused by ID data (near and far use different ones).
struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t dim = 16;           // needs dim >= classes + 3
  double class_spread = 4.0;      // distance of each class mean from the centre
  double offset = 6.0;            // per-coordinate positive offset before the ReLU
  double nuisance_scale = 1.5;    // std of the directions unrelated to classes or shifts
  double near_shift = 1.5;
  double far_shift = 8.0;
  double heavy_tail_df = 3.0;     // Student-t noise for far_general; 0 = Gaussian
  std::size_t n_train = 2000;
  std::size_t n_val = 500;
  std::size_t n_test = 2000;
  std::size_t n_ood = 2500;       // per OoD dataset, before the validation holdout
  std::vector<std::string> backbones{"synth-a"};
  std::size_t seeds = 1;
  std::size_t dropout_passes = 8;
  double dropout_rate = 0.1;
  double odin_temperature = 1.0;
  double odin_epsilon = 0.0014;
  std::uint64_t seed = 0;
};

struct SyntheticDataset {
  FeatureSet features;
  AugmentedDump augmented;
};

struct SyntheticRun {
  LinearHead head;
  FeatureSet train;  // labels and logits, no augmented channels
  SyntheticDataset val;
  SyntheticDataset test;
  std::vector<std::pair<std::string, SyntheticDataset>> ood;  // near, far_bp, far_general
};

/// One (backbone, seed) run, fully determined by the spec and the indices.
SyntheticRun generate_synthetic_run(const SyntheticSpec& spec, std::size_t backbone, std::size_t seed);

/// Writes every run under out_dir/<backbone>/s<k>/ plus out_dir/manifest.json
/// and returns the manifest.
BenchmarkManifest gen_synthetic_benchmark(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace oodkit
