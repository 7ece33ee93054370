#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oodkit/decision.hpp"
#include "oodkit/types.hpp"
#include "oodkit/weibull.hpp"

namespace oodkit {

struct PrincipalSubspace {
  Vector train_mean;   // d
  Matrix basis;        // d x D, orthonormal columns, descending eigenvalue order
  Vector eigenvalues;  // D, non-increasing

  std::size_t rank() const { return static_cast<std::size_t>(basis.cols()); }
};

/// L2-normalized training features for exact nearest-neighbour search. Also
/// serves as the Relation support set.
struct KnnIndex {
  RowMatrix points;
  std::uint64_t seed = 0;
  std::size_t cap = 0;

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
};

struct Prototypes {
  RowMatrix dists;                 // C x C, row c = mean softmax of samples predicted c
  std::vector<bool> uniform_fallback;
};

struct DiceMask {
  RowMatrix mask;  // C x d, entries 0 or 1
  double sparsity = 0.0;
  bool degenerate = false;
};

struct ShePatterns {
  RowMatrix patterns;  // C x d
  std::vector<bool> class_mean_fallback;
};

struct OpenMaxModel {
  RowMatrix mavs;  // C x C mean logit vectors of correctly classified samples
  std::vector<WeibullTail> tails;
  std::size_t tail_size = 0;  // requested eta
  std::size_t alpha_top = 0;
};

/// Every training-derived artifact, each optional so that partial fits are
/// representable. Fit-time hyperparameters are stored next to the artifact
/// they shaped.
struct FittedStats {
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;

  std::optional<RowMatrix> class_means;  // C x d
  std::optional<Matrix> shared_cov_inv;
  std::optional<std::vector<Matrix>> class_cov_inv;
  std::optional<Vector> background_mean;
  std::optional<Matrix> background_cov_inv;
  std::optional<Vector> train_mean;
  std::optional<PrincipalSubspace> subspace;
  std::optional<double> vim_alpha;
  std::optional<KnnIndex> knn;
  std::optional<Prototypes> prototypes;
  std::optional<double> temperature;
  std::optional<double> react_threshold;
  std::optional<double> react_percentile;
  std::optional<DiceMask> dice;
  std::optional<ShePatterns> she;
  std::optional<OpenMaxModel> openmax;
  std::map<std::string, Threshold> thresholds;

  /// Throws kDimensionMismatch when the stats were fit for another d.
  void check_feature_dim(std::size_t d) const;
};

}  // namespace oodkit
