#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "oodkit/types.hpp"

namespace fixtures {

using oodkit::AugmentedDump;
using oodkit::FeatureSet;
using oodkit::LinearHead;
using oodkit::RowMatrix;
using oodkit::Vector;

struct Problem {
  LinearHead head;
  FeatureSet train;
  FeatureSet val;
  FeatureSet test;
  AugmentedDump test_aug;
};

inline RowMatrix gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  RowMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  }
  return m;
}

/// Non-negative, class-structured features: relu(0.5 + class offset + noise).
inline FeatureSet labelled(std::mt19937_64& rng, const RowMatrix& centers, const LinearHead& head, std::size_t n) {
  const auto c = centers.rows();
  FeatureSet fs;
  fs.num_classes = static_cast<std::size_t>(c);
  fs.features = gaussian(rng, static_cast<Eigen::Index>(n), centers.cols());
  std::vector<std::int32_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<std::int32_t>(i % static_cast<std::size_t>(c));
    const auto r = static_cast<Eigen::Index>(i);
    fs.features.row(r) = (fs.features.row(r) + centers.row(y[i])).cwiseMax(0.0);
  }
  fs.labels = std::move(y);
  fs.logits = head.batch_logits(fs.features);
  return fs;
}

/// Random small problem with d features and c classes.
inline Problem make_problem(std::uint64_t seed, std::size_t d, std::size_t c, std::size_t n_train = 64,
                            std::size_t n_test = 32, std::size_t dropout_passes = 4) {
  std::mt19937_64 rng(seed);
  const auto dd = static_cast<Eigen::Index>(d);
  const auto cc = static_cast<Eigen::Index>(c);
  RowMatrix centers = gaussian(rng, cc, dd, 1.5).array() + 1.0;
  Problem p;
  p.head.weights = gaussian(rng, cc, dd, 0.7);
  p.head.bias = gaussian(rng, cc, 1, 0.3).col(0);
  p.train = labelled(rng, centers, p.head, n_train);
  p.val = labelled(rng, centers, p.head, n_train / 2);
  p.test = labelled(rng, centers, p.head, n_test);

  std::uniform_real_distribution<double> u(0.05, 1.0);
  RowMatrix stacks(static_cast<Eigen::Index>(n_test), static_cast<Eigen::Index>(dropout_passes * c));
  for (Eigen::Index i = 0; i < stacks.rows(); ++i) {
    for (std::size_t t = 0; t < dropout_passes; ++t) {
      Vector row(cc);
      for (Eigen::Index k = 0; k < cc; ++k) row(k) = u(rng);
      row /= row.sum();
      stacks.row(i).segment(static_cast<Eigen::Index>(t * c), cc) = row.transpose();
    }
  }
  p.test_aug.dropout_prob_stacks = stacks;
  p.test_aug.dropout_samples = dropout_passes;
  p.test_aug.odin_logits = *p.test.logits + gaussian(rng, static_cast<Eigen::Index>(n_test), cc, 0.01);
  p.test_aug.odin_epsilon = 0.0014;
  p.test_aug.source_checkpoint = "fixture";
  return p;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("oodkit_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
