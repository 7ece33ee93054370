#pragma once

#include <vector>

#include "oodkit/fitted_stats.hpp"
#include "oodkit/methods.hpp"
#include "oodkit/types.hpp"

namespace oodkit {

/// kSerial runs the straight-line per-sample reference formulas one sample
/// at a time; kParallel runs the OpenMP kernels. Both return the same scores
/// up to rounding (bit-identical for methods without a specialised kernel).
enum class Execution { kSerial, kParallel };

struct ScoreInputs {
  const FeatureSet* data = nullptr;
  const AugmentedDump* augmented = nullptr;
  const LinearHead* head = nullptr;
  const FittedStats* stats = nullptr;
};

/// Scores every sample of inputs.data with orientation "higher = more ID".
/// Throws kMissingArtifact, kMissingInput or kDimensionMismatch when the
/// method's requirements are not met.
ScoreVector compute_scores(const MethodConfig& cfg, const ScoreInputs& in,
                           Execution exec = Execution::kParallel);

/// Per-sample reference formulas. Vectors are column vectors: z has length d,
/// logits length C.
namespace scoring {

using VecRef = const Eigen::Ref<const Vector>&;

double msp(VecRef logits);
double mls(VecRef logits);
double energy(VecRef logits, double temperature);
double tempscale(VecRef logits, double temperature);
/// sum_all = false sums the top-min(M, C) terms; true sums all C.
double gen(VecRef logits, double gamma, std::size_t top_m, bool sum_all = false);
/// stack: T x C probability rows.
double mcdropout(const RowMatrix& stack);
double odin(VecRef odin_logits, double temperature);
double klmatch(VecRef logits, const RowMatrix& prototypes);
double mahalanobis(VecRef z, const RowMatrix& means, const Matrix& cov_inv);
double rmds(VecRef z, const RowMatrix& means, const std::vector<Matrix>& class_cov_inv,
            VecRef background_mean, const Matrix& background_cov_inv);
/// Distance from normalized z to its K-th nearest stored point, negated.
double knn(VecRef z, const KnnIndex& index, std::size_t k);
double fdbd(VecRef z, const LinearHead& head, VecRef train_mean,
            bool distance_as_normalizer = true, bool negate = false);
double residual(VecRef z, const PrincipalSubspace& s);
double vim(VecRef z, VecRef logits, const PrincipalSubspace& s, double alpha);
double react(VecRef z, const LinearHead& head, double threshold, bool energy_on_top = false);
/// ASH-S: prune all but the top-(100 - percentile)% activations, rescale the
/// survivors so the activation sum is preserved, then energy.
Vector ash_process(VecRef z, double percentile);
double ash(VecRef z, const LinearHead& head, double percentile);
double she(VecRef z, const RowMatrix& patterns, double beta);
double gradnorm(VecRef z, VecRef logits);
double relation(VecRef z, const RowMatrix& support, double power);
/// Recalibrated class scores [unknown, v_hat_1..C].
Vector openmax_recalibrate(VecRef activation, const OpenMaxModel& model);
double openmax(VecRef activation, const OpenMaxModel& model);
double dice(VecRef z, const LinearHead& head, const RowMatrix& mask);

struct RankFeatResult {
  std::vector<double> scores;
  bool degenerate = false;  // batch of rank <= 1
  bool converged = true;
};
RankFeatResult rankfeat(const RowMatrix& batch, const LinearHead& head,
                        int max_iterations = 100, double tolerance = 1e-10);

}  // namespace scoring

}  // namespace oodkit
