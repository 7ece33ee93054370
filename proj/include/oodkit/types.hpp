#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oodkit/error.hpp"

namespace oodkit {

/// Sample-major storage: one row per sample.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Penultimate-layer features of N samples with optional labels and logits.
///
/// num_classes is the declared class count C (0 when unknown). When logits
/// are present their column count must equal C; labels must lie in [0, C).
struct FeatureSet {
  RowMatrix features;
  std::optional<std::vector<std::int32_t>> labels;
  std::optional<RowMatrix> logits;
  std::optional<std::vector<std::string>> ids;
  std::size_t num_classes = 0;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
  bool has_labels() const { return labels.has_value(); }
  bool has_logits() const { return logits.has_value(); }
};

/// Final linear layer: logits = weights * z + bias.
struct LinearHead {
  RowMatrix weights;  // C x d
  Vector bias;        // C

  std::size_t num_classes() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(weights.cols()); }

  Vector logits(const Eigen::Ref<const Vector>& z) const { return weights * z + bias; }
  RowMatrix batch_logits(const RowMatrix& features) const;
};

struct ProbVector {
  Vector probs;

  std::size_t size() const { return static_cast<std::size_t>(probs.size()); }
  double max() const { return probs.maxCoeff(); }
};

struct ScoreVector {
  std::string method;
  std::vector<double> scores;  // higher = more in-distribution
};

/// Channels the post-hoc toolkit cannot compute itself (stochastic forward
/// passes, input-gradient perturbation), supplied by the extractor.
struct AugmentedDump {
  /// N x (T*C), sample i's T probability rows laid out contiguously.
  std::optional<RowMatrix> dropout_prob_stacks;
  std::optional<RowMatrix> odin_logits;  // N x C
  std::string source_checkpoint;
  std::size_t dropout_samples = 0;  // T
  double odin_epsilon = 0.0;

  bool empty() const { return !dropout_prob_stacks && !odin_logits; }
};

struct Violation {
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::string summary() const;
};

/// Pure check of the dimensional and finiteness invariants; never throws.
ValidationResult validate_feature_set(const FeatureSet& fs,
                                      const LinearHead* head = nullptr);

ValidationResult validate_augmented(const AugmentedDump& aug, std::size_t n,
                                    std::size_t num_classes);

/// Temperature softmax with max-shift. Throws kInvalidArgument for T <= 0.
ProbVector softmax(const Eigen::Ref<const Vector>& logits, double temperature = 1.0);

/// T * log sum exp(f / T), max-shifted.
double log_sum_exp(const Eigen::Ref<const Vector>& logits, double temperature = 1.0);

/// Lowest index among maxima.
std::size_t argmax(const Eigen::Ref<const Vector>& v);

/// Logits from the dump when present, otherwise recomputed from the head.
RowMatrix logits_or_head(const FeatureSet& fs, const LinearHead* head);

}  // namespace oodkit
