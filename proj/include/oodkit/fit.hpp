#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "oodkit/fitted_stats.hpp"
#include "oodkit/methods.hpp"
#include "oodkit/types.hpp"

namespace oodkit {

struct FitOptions {
  std::size_t knn_cap = 50000;
  std::uint64_t seed = 0;
  double shrinkage = 1e-6;
};

/// C x d class means. Throws kMissingInput without labels and
/// kInvalidArgument naming the first class with no samples.
RowMatrix fit_class_means(const FeatureSet& train, std::size_t num_classes = 0);

/// Shrunk inverse of the pooled within-class covariance.
Matrix fit_shared_cov_inv(const FeatureSet& train, const RowMatrix& means,
                          double shrinkage = 1e-6);

/// Per-class shrunk inverse covariances, each class shrunk independently.
std::vector<Matrix> fit_class_cov_inv(const FeatureSet& train, const RowMatrix& means,
                                      double shrinkage = 1e-6);

struct BackgroundGaussian {
  Vector mean;
  Matrix cov_inv;
};

/// Single Gaussian over all training features; labels are ignored.
BackgroundGaussian fit_background_gaussian(const FeatureSet& train, double shrinkage = 1e-6);

/// Centre at the training mean and keep the top-`dim` eigenvectors of the
/// centred covariance. Throws kInvalidArgument for dim > d.
PrincipalSubspace fit_principal_subspace(const FeatureSet& train, std::size_t dim);

/// ||(z - mean) - P P^T (z - mean)||_2
double residual_norm(const Eigen::Ref<const Vector>& z, const PrincipalSubspace& s);

/// sum_i max_c f_c(z_i) / sum_i residual(z_i). Throws kDegenerate when the
/// total residual is zero and kInvalidArgument when the ratio is not positive.
double fit_vim_alpha(const FeatureSet& train, const LinearHead& head, const PrincipalSubspace& s);

KnnIndex fit_knn_index(const FeatureSet& train, std::size_t cap, std::uint64_t seed);

/// Mean softmax per predicted class on validation data.
Prototypes fit_prototypes(const FeatureSet& val, const LinearHead* head = nullptr);

/// Mean NLL of softmax(f / T) at the true labels.
double temperature_nll(const RowMatrix& logits, std::span<const std::int32_t> labels, double t);

/// Golden-section search on log T over [0.01, 100]; never worse than T = 1.
double fit_temperature(const FeatureSet& val, const LinearHead* head = nullptr);

/// Linear-interpolated percentile of all pooled activations.
double fit_react_threshold(const FeatureSet& train, double percentile);

/// Percentile with linear interpolation between order statistics (numpy "linear").
double percentile_linear(std::vector<double> values, double percentile);

/// Number of entries kept out of n at the given pruning percentage.
std::size_t kept_count(std::size_t n, double percent_pruned);

DiceMask fit_dice_mask(const FeatureSet& train, const LinearHead& head, double sparsity);
ShePatterns fit_she_patterns(const FeatureSet& train, const LinearHead& head);
OpenMaxModel fit_openmax_tails(const FeatureSet& train, const LinearHead& head,
                               std::size_t tail_size, std::size_t alpha_top);

/// Subspace dimension for ViM/Residual; dim = -1 resolves to min(256, d / 2).
std::size_t resolve_subspace_dim(const MethodConfig& cfg, std::size_t d);

struct FitInputs {
  const FeatureSet* train = nullptr;
  const FeatureSet* val = nullptr;
  const LinearHead* head = nullptr;
  FitOptions options;
};

/// Fit whatever the configured method needs that is missing from `stats` or
/// was fit under different fit-time hyperparameters.
void ensure_fitted(FittedStats& stats, const MethodConfig& cfg, const FitInputs& in);

}  // namespace oodkit
