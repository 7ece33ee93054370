#include "oodkit/scores.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <omp.h>

#include "oodkit/fit.hpp"
#include "oodkit/linalg.hpp"
#include "oodkit/parallel.hpp"

namespace oodkit {

void set_worker_count(int jobs) {
  if (jobs > 0) omp_set_num_threads(jobs);
}

int worker_count() { return omp_get_max_threads(); }

namespace scoring {

namespace {

constexpr double kPrototypeFloor = 1e-12;

double quad_form(VecRef x, const Matrix& a) { return x.dot(a * x); }

// Indices sorted by value descending; equal values keep the lower index first.
std::vector<Eigen::Index> descending_order(VecRef v) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(v.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return v(a) > v(b); });
  return order;
}

void require_classes(std::size_t c, const char* what) {
  if (c == 0) throw Error(ErrorCode::kInvalidArgument, std::string(what) + ": empty logit vector");
}

}  // namespace

double msp(VecRef logits) {
  require_classes(static_cast<std::size_t>(logits.size()), "msp");
  return softmax(logits).max();
}

double mls(VecRef logits) {
  require_classes(static_cast<std::size_t>(logits.size()), "mls");
  return logits.maxCoeff();
}

double energy(VecRef logits, double temperature) {
  require_classes(static_cast<std::size_t>(logits.size()), "energy");
  return log_sum_exp(logits, temperature);
}

double tempscale(VecRef logits, double temperature) {
  require_classes(static_cast<std::size_t>(logits.size()), "tempscale");
  return softmax(logits, temperature).max();
}

double gen(VecRef logits, double gamma, std::size_t top_m, bool sum_all) {
  require_classes(static_cast<std::size_t>(logits.size()), "gen");
  Vector p = softmax(logits).probs;
  std::sort(p.data(), p.data() + p.size(), std::greater<>());
  const auto terms = sum_all ? static_cast<std::size_t>(p.size())
                             : std::min<std::size_t>(top_m, static_cast<std::size_t>(p.size()));
  double s = 0.0;
  for (std::size_t m = 0; m < terms; ++m) {
    const double pm = p(static_cast<Eigen::Index>(m));
    s += std::pow(pm, gamma) * std::pow(1.0 - pm, gamma);
  }
  return -s;
}

double mcdropout(const RowMatrix& stack) {
  if (stack.rows() == 0) throw Error(ErrorCode::kInvalidArgument, "empty dropout stack");
  const Vector mean = stack.colwise().mean().transpose();
  double h = 0.0;
  for (Eigen::Index c = 0; c < mean.size(); ++c) {
    if (mean(c) > 0.0) h -= mean(c) * std::log(mean(c));
  }
  return -h;
}

double odin(VecRef odin_logits, double temperature) {
  require_classes(static_cast<std::size_t>(odin_logits.size()), "odin");
  return softmax(odin_logits, temperature).max();
}

double klmatch(VecRef logits, const RowMatrix& prototypes) {
  if (prototypes.cols() != logits.size() || prototypes.rows() == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "prototype shape does not match logits");
  }
  const Vector p = softmax(logits).probs;
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < prototypes.rows(); ++c) {
    double kl = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      if (p(i) > 0.0) kl += p(i) * (std::log(p(i)) - std::log(std::max(prototypes(c, i), kPrototypeFloor)));
    }
    best = std::min(best, kl);
  }
  return -best;
}

double mahalanobis(VecRef z, const RowMatrix& means, const Matrix& cov_inv) {
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < means.rows(); ++c) {
    const Vector diff = z - means.row(c).transpose();
    best = std::max(best, -quad_form(diff, cov_inv));
  }
  return best;
}

double rmds(VecRef z, const RowMatrix& means, const std::vector<Matrix>& class_cov_inv,
            VecRef background_mean, const Matrix& background_cov_inv) {
  const Vector bg_diff = z - background_mean;
  const double background = quad_form(bg_diff, background_cov_inv);
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < means.rows(); ++c) {
    const Vector diff = z - means.row(c).transpose();
    best = std::min(best, quad_form(diff, class_cov_inv[static_cast<std::size_t>(c)]) - background);
  }
  return -best;
}

double knn(VecRef z, const KnnIndex& index, std::size_t k) {
  if (k < 1 || k > index.size()) {
    throw Error(ErrorCode::kInvalidArgument, "K=" + std::to_string(k) +
                                                 " exceeds index size " + std::to_string(index.size()));
  }
  const double norm = z.norm();
  if (norm == 0.0) throw Error(ErrorCode::kDegenerate, "zero-norm query feature");
  const Vector q = z / norm;
  std::vector<double> dist(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    dist[i] = (index.points.row(static_cast<Eigen::Index>(i)).transpose() - q).norm();
  }
  std::sort(dist.begin(), dist.end());
  return -dist[k - 1];
}

double fdbd(VecRef z, const LinearHead& head, VecRef train_mean, bool distance_as_normalizer,
            bool negate) {
  const auto classes = static_cast<Eigen::Index>(head.num_classes());
  if (classes < 2) throw Error(ErrorCode::kDegenerate, "fDBD needs at least two classes");
  const Vector logits = head.logits(z);
  const auto y = static_cast<Eigen::Index>(argmax(logits));
  double total = 0.0;
  for (Eigen::Index c = 0; c < classes; ++c) {
    if (c == y) continue;
    const Vector dw = (head.weights.row(y) - head.weights.row(c)).transpose();
    const double wn = dw.norm();
    if (wn == 0.0) throw Error(ErrorCode::kDegenerate, "degenerate class pair");
    total += std::abs(dw.dot(z) + (head.bias(y) - head.bias(c))) / wn;
  }
  const double normalizer = distance_as_normalizer ? (z - train_mean).norm() : z.norm();
  if (normalizer == 0.0) throw Error(ErrorCode::kDegenerate, "fDBD normalizer is zero");
  const double score = total / static_cast<double>(classes - 1) / normalizer;
  return negate ? -score : score;
}

double residual(VecRef z, const PrincipalSubspace& s) { return -residual_norm(z, s); }

double vim(VecRef z, VecRef logits, const PrincipalSubspace& s, double alpha) {
  return -alpha * residual_norm(z, s) + log_sum_exp(logits);
}

double react(VecRef z, const LinearHead& head, double threshold, bool energy_on_top) {
  const Vector clamped = z.cwiseMin(threshold);
  const Vector logits = head.logits(clamped);
  return energy_on_top ? log_sum_exp(logits) : softmax(logits).max();
}

Vector ash_process(VecRef z, double percentile) {
  const auto d = static_cast<std::size_t>(z.size());
  // at least the largest activation survives
  const std::size_t keep = std::max<std::size_t>(1, kept_count(d, percentile));
  const double total = z.sum();
  if (total == 0.0) throw Error(ErrorCode::kDegenerate, "zero activation mass");
  const auto order = descending_order(z);
  Vector kept = Vector::Zero(z.size());
  for (std::size_t k = 0; k < keep; ++k) kept(order[k]) = z(order[k]);
  const double survivors = kept.sum();
  if (survivors == 0.0) throw Error(ErrorCode::kDegenerate, "zero activation mass after pruning");
  return kept * (total / survivors);
}

double ash(VecRef z, const LinearHead& head, double percentile) {
  return log_sum_exp(head.logits(ash_process(z, percentile)));
}

double she(VecRef z, const RowMatrix& patterns, double beta) {
  if (!(beta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "SHE beta must be positive");
  const Vector inner = patterns * z;
  return log_sum_exp(inner, 1.0 / beta);
}

double gradnorm(VecRef z, VecRef logits) {
  require_classes(static_cast<std::size_t>(logits.size()), "gradnorm");
  const Vector p = softmax(logits).probs;
  const double uniform = 1.0 / static_cast<double>(p.size());
  return (p.array() - uniform).abs().sum() * z.lpNorm<1>();
}

double relation(VecRef z, const RowMatrix& support, double power) {
  const double norm = z.norm();
  if (norm == 0.0) throw Error(ErrorCode::kDegenerate, "zero-norm query feature");
  const Vector q = z / norm;
  double total = 0.0;
  for (Eigen::Index i = 0; i < support.rows(); ++i) {
    const double cosine = support.row(i).dot(q);
    if (cosine > 0.0) total += std::pow(cosine, power);
  }
  return total;
}

Vector openmax_recalibrate(VecRef v, const OpenMaxModel& model) {
  const auto classes = v.size();
  if (model.mavs.rows() != classes || static_cast<Eigen::Index>(model.tails.size()) != classes) {
    throw Error(ErrorCode::kDimensionMismatch, "OpenMax model does not match activation size");
  }
  const auto top = std::min<std::size_t>(model.alpha_top, static_cast<std::size_t>(classes));
  const auto order = descending_order(v);
  Vector out(classes + 1);
  out.tail(classes) = v;
  double unknown = 0.0;
  for (std::size_t r = 0; r < top; ++r) {
    const Eigen::Index c = order[r];
    const auto& tail = model.tails[static_cast<std::size_t>(c)];
    if (!tail.valid) continue;
    const double dist = (v - model.mavs.row(c).transpose()).norm();
    const double rank_weight = static_cast<double>(model.alpha_top - r) /
                               static_cast<double>(model.alpha_top);
    const double w = 1.0 - rank_weight * tail.params.cdf(dist);
    out(c + 1) = v(c) * w;
    unknown += v(c) * (1.0 - w);
  }
  out(0) = unknown;
  return out;
}

double openmax(VecRef v, const OpenMaxModel& model) {
  const Vector recal = openmax_recalibrate(v, model);
  const Vector p = softmax(recal).probs;
  return p.tail(p.size() - 1).maxCoeff();
}

double dice(VecRef z, const LinearHead& head, const RowMatrix& mask) {
  if (mask.rows() != head.weights.rows() || mask.cols() != head.weights.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "DICE mask shape does not match head");
  }
  const RowMatrix masked = mask.cwiseProduct(head.weights);
  return log_sum_exp(masked * z + head.bias);
}

RankFeatResult rankfeat(const RowMatrix& batch, const LinearHead& head, int max_iterations,
                        double tolerance) {
  if (batch.cols() != static_cast<Eigen::Index>(head.feature_dim())) {
    throw Error(ErrorCode::kDimensionMismatch, "feature_dim mismatch between head and features");
  }
  RankFeatResult out;
  const auto top = linalg::top_singular_triplet(batch, max_iterations, tolerance);
  out.converged = top.converged;
  RowMatrix reduced = batch - top.sigma * top.u * top.v.transpose();
  out.degenerate = batch.rows() <= 1 || reduced.norm() <= 1e-12 * batch.norm();
  out.scores.resize(static_cast<std::size_t>(batch.rows()));
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    out.scores[static_cast<std::size_t>(i)] = head.logits(reduced.row(i).transpose()).maxCoeff();
  }
  return out;
}

}  // namespace scoring

namespace {

const FittedStats& need_stats(const ScoreInputs& in) {
  if (!in.stats) throw Error(ErrorCode::kMissingArtifact, "fitted statistics required");
  return *in.stats;
}

template <typename T>
const T& need(const std::optional<T>& artifact, const char* name) {
  if (!artifact) throw Error(ErrorCode::kMissingArtifact, std::string("missing artifact: ") + name);
  return *artifact;
}

const LinearHead& need_head(const ScoreInputs& in) {
  if (!in.head) throw Error(ErrorCode::kMissingInput, "linear head required");
  if (in.head->feature_dim() != in.data->dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "feature_dim mismatch between head and features");
  }
  return *in.head;
}

const AugmentedDump& need_augmented(const ScoreInputs& in) {
  if (!in.augmented) throw Error(ErrorCode::kMissingInput, "augmented dump channels required");
  return *in.augmented;
}

void check_vector(const Vector& v, std::size_t n, const char* what) {
  if (static_cast<std::size_t>(v.size()) != n) {
    throw Error(ErrorCode::kDimensionMismatch, std::string(what) + " dimension mismatch");
  }
}

bool flag(const MethodConfig& cfg, const char* key) { return cfg.get(key) != 0.0; }

}  // namespace

ScoreVector compute_scores(const MethodConfig& cfg, const ScoreInputs& in, Execution exec) {
  if (!in.data) throw Error(ErrorCode::kMissingInput, "feature set required");
  const FeatureSet& data = *in.data;
  const std::size_t n = data.size();
  const std::size_t d = data.dim();
  const bool par = exec == Execution::kParallel;
  if (in.stats && in.stats->feature_dim != 0) in.stats->check_feature_dim(d);

  auto row = [&](const RowMatrix& m, std::size_t i) {
    return m.row(static_cast<Eigen::Index>(i)).transpose();
  };
  auto logits = [&]() { return logits_or_head(data, in.head); };

  ScoreVector out;
  out.method = std::string(method_id(cfg.method()));
  const RowMatrix& z = data.features;

  switch (cfg.method()) {
    case Method::kMsp: {
      const RowMatrix f = logits();
      out.scores = map_indices(n, par, [&](std::size_t i) { return scoring::msp(row(f, i)); });
      break;
    }
    case Method::kMls: {
      const RowMatrix f = logits();
      out.scores = map_indices(n, par, [&](std::size_t i) { return scoring::mls(row(f, i)); });
      break;
    }
    case Method::kEnergy: {
      const RowMatrix f = logits();
      const double t = cfg.get("T");
      out.scores = map_indices(n, par, [&](std::size_t i) { return scoring::energy(row(f, i), t); });
      break;
    }
    case Method::kTempScale: {
      const double t = need(need_stats(in).temperature, "temperature");
      const RowMatrix f = logits();
      out.scores = map_indices(n, par, [&](std::size_t i) { return scoring::tempscale(row(f, i), t); });
      break;
    }
    case Method::kGen: {
      const RowMatrix f = logits();
      const double gamma = cfg.get("gamma");
      const auto m = static_cast<std::size_t>(cfg.get("M"));
      const bool all = flag(cfg, "sum_all");
      out.scores = map_indices(n, par, [&](std::size_t i) { return scoring::gen(row(f, i), gamma, m, all); });
      break;
    }
    case Method::kMcDropout: {
      const auto& aug = need_augmented(in);
      const auto& stacks = need(aug.dropout_prob_stacks, "dropout probability stack");
      const auto t = static_cast<Eigen::Index>(aug.dropout_samples);
      if (t < 1 || static_cast<std::size_t>(stacks.rows()) != n || stacks.cols() % t != 0) {
        throw Error(ErrorCode::kDimensionMismatch, "dropout stack shape mismatch");
      }
      const Eigen::Index c = stacks.cols() / t;
      out.scores = map_indices(n, par, [&](std::size_t i) {
        const RowMatrix s = Eigen::Map<const RowMatrix>(stacks.row(static_cast<Eigen::Index>(i)).data(), t, c);
        return scoring::mcdropout(s);
      });
      break;
    }
    case Method::kOdin: {
      const auto& aug = need_augmented(in);
      const auto& f = need(aug.odin_logits, "ODIN logits");
      if (static_cast<std::size_t>(f.rows()) != n) {
        throw Error(ErrorCode::kDimensionMismatch, "ODIN logits row count mismatch");
      }
      if (cfg.has_explicit("noise") && std::abs(cfg.get("noise") - aug.odin_epsilon) > 1e-12) {
        throw Error(ErrorCode::kInvalidArgument,
                    "ODIN noise differs from the perturbation magnitude recorded in the dump");
      }
      const double t = cfg.get("T");
      out.scores = map_indices(n, par, [&](std::size_t i) { return scoring::odin(row(f, i), t); });
      break;
    }
    case Method::kKlMatching: {
      const auto& protos = need(need_stats(in).prototypes, "prototypes").dists;
      const RowMatrix f = logits();
      out.scores = map_indices(n, par, [&](std::size_t i) { return scoring::klmatch(row(f, i), protos); });
      break;
    }
    case Method::kMahalanobis: {
      const auto& s = need_stats(in);
      const auto& means = need(s.class_means, "class means");
      const auto& inv = need(s.shared_cov_inv, "shared covariance inverse");
      if (means.cols() != static_cast<Eigen::Index>(d)) {
        throw Error(ErrorCode::kDimensionMismatch, "class mean dimension mismatch");
      }
      if (!par) {
        out.scores = map_indices(n, false, [&](std::size_t i) { return scoring::mahalanobis(row(z, i), means, inv); });
        break;
      }
      // Whitened kernel: Sigma^-1 = L L^T, distance = ||L^T z - L^T mu_c||^2.
      Eigen::LLT<Matrix> llt(inv);
      if (llt.info() != Eigen::Success) {
        throw Error(ErrorCode::kDegenerate, "covariance inverse is not positive definite");
      }
      const Matrix l = llt.matrixL();
      const RowMatrix white_means = means * l;
      out.scores = map_indices(n, true, [&](std::size_t i) {
        const Eigen::RowVectorXd y = z.row(static_cast<Eigen::Index>(i)) * l;
        return -(white_means.rowwise() - y).rowwise().squaredNorm().minCoeff();
      });
      break;
    }
    case Method::kRmds: {
      const auto& s = need_stats(in);
      const auto& means = need(s.class_means, "class means");
      const auto& covs = need(s.class_cov_inv, "per-class covariance inverses");
      const auto& mu0 = need(s.background_mean, "background mean");
      const auto& inv0 = need(s.background_cov_inv, "background covariance inverse");
      check_vector(mu0, d, "background mean");
      if (covs.size() != static_cast<std::size_t>(means.rows())) {
        throw Error(ErrorCode::kDimensionMismatch, "class covariance count mismatch");
      }
      out.scores = map_indices(n, par, [&](std::size_t i) {
        return scoring::rmds(row(z, i), means, covs, mu0, inv0);
      });
      break;
    }
    case Method::kKnn: {
      const auto& index = need(need_stats(in).knn, "knn index");
      const auto k = static_cast<std::size_t>(cfg.get("K"));
      if (!par) {
        out.scores = map_indices(n, false, [&](std::size_t i) { return scoring::knn(row(z, i), index, k); });
        break;
      }
      if (k > index.size()) {
        throw Error(ErrorCode::kInvalidArgument, "K=" + std::to_string(k) +
                                                     " exceeds index size " + std::to_string(index.size()));
      }
      out.scores = map_indices(n, true, [&](std::size_t i) {
        const double norm = z.row(static_cast<Eigen::Index>(i)).norm();
        if (norm == 0.0) throw Error(ErrorCode::kDegenerate, "zero-norm query feature");
        const Eigen::RowVectorXd q = z.row(static_cast<Eigen::Index>(i)) / norm;
        std::vector<double> dist(index.size());
        for (std::size_t j = 0; j < index.size(); ++j) {
          dist[j] = (index.points.row(static_cast<Eigen::Index>(j)) - q).norm();
        }
        std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
        return -dist[k - 1];
      });
      break;
    }
    case Method::kFdbd: {
      const auto& head = need_head(in);
      const auto& mu = need(need_stats(in).train_mean, "training mean");
      check_vector(mu, d, "training mean");
      const bool dist_norm = flag(cfg, "distance_as_normalizer");
      const bool negate = flag(cfg, "negate");
      if (!par) {
        out.scores = map_indices(n, false, [&](std::size_t i) {
          return scoring::fdbd(row(z, i), head, mu, dist_norm, negate);
        });
        break;
      }
      const auto classes = static_cast<Eigen::Index>(head.num_classes());
      if (classes < 2) throw Error(ErrorCode::kDegenerate, "fDBD needs at least two classes");
      Matrix pair_norm(classes, classes);
      for (Eigen::Index a = 0; a < classes; ++a) {
        for (Eigen::Index b = 0; b < classes; ++b) {
          pair_norm(a, b) = (head.weights.row(a) - head.weights.row(b)).norm();
        }
      }
      const RowMatrix f = head.batch_logits(z);
      out.scores = map_indices(n, true, [&](std::size_t i) {
        const auto r = static_cast<Eigen::Index>(i);
        const auto y = static_cast<Eigen::Index>(argmax(f.row(r).transpose()));
        double total = 0.0;
        for (Eigen::Index c = 0; c < classes; ++c) {
          if (c == y) continue;
          if (pair_norm(y, c) == 0.0) throw Error(ErrorCode::kDegenerate, "degenerate class pair");
          total += std::abs(f(r, y) - f(r, c)) / pair_norm(y, c);
        }
        const double normalizer = dist_norm ? (z.row(r).transpose() - mu).norm() : z.row(r).norm();
        if (normalizer == 0.0) throw Error(ErrorCode::kDegenerate, "fDBD normalizer is zero");
        const double score = total / static_cast<double>(classes - 1) / normalizer;
        return negate ? -score : score;
      });
      break;
    }
    case Method::kVim:
    case Method::kResidual: {
      const auto& s = need_stats(in);
      const auto& sub = need(s.subspace, "principal subspace");
      check_vector(sub.train_mean, d, "subspace mean");
      const std::size_t want = resolve_subspace_dim(cfg, d);
      if (sub.rank() != want) {
        throw Error(ErrorCode::kMissingArtifact, "principal subspace fitted with dim=" +
                                                     std::to_string(sub.rank()) + ", config wants " +
                                                     std::to_string(want));
      }
      if (cfg.method() == Method::kResidual) {
        out.scores = map_indices(n, par, [&](std::size_t i) { return scoring::residual(row(z, i), sub); });
        break;
      }
      const double alpha = need(s.vim_alpha, "ViM alpha");
      const RowMatrix f = logits();
      out.scores = map_indices(n, par, [&](std::size_t i) {
        return scoring::vim(row(z, i), row(f, i), sub, alpha);
      });
      break;
    }
    case Method::kReact: {
      const auto& head = need_head(in);
      const auto& s = need_stats(in);
      const double b = need(s.react_threshold, "ReAct threshold");
      if (s.react_percentile && *s.react_percentile != cfg.get("percentile")) {
        throw Error(ErrorCode::kMissingArtifact, "ReAct threshold fitted at another percentile");
      }
      const bool on_energy = flag(cfg, "energy_on_top");
      out.scores = map_indices(n, par, [&](std::size_t i) { return scoring::react(row(z, i), head, b, on_energy); });
      break;
    }
    case Method::kAsh: {
      const auto& head = need_head(in);
      const double pct = cfg.get("percentile");
      out.scores = map_indices(n, par, [&](std::size_t i) { return scoring::ash(row(z, i), head, pct); });
      break;
    }
    case Method::kShe: {
      const auto& pat = need(need_stats(in).she, "SHE patterns").patterns;
      if (pat.cols() != static_cast<Eigen::Index>(d)) {
        throw Error(ErrorCode::kDimensionMismatch, "SHE pattern dimension mismatch");
      }
      const double beta = cfg.get("beta");
      out.scores = map_indices(n, par, [&](std::size_t i) { return scoring::she(row(z, i), pat, beta); });
      break;
    }
    case Method::kRankFeat: {
      const auto& head = need_head(in);
      if (!par) {
        out.scores = scoring::rankfeat(z, head).scores;
        break;
      }
      const auto top = linalg::top_singular_triplet(z);
      const Eigen::RowVectorXd vt = top.v.transpose();
      out.scores = map_indices(n, true, [&](std::size_t i) {
        const auto r = static_cast<Eigen::Index>(i);
        const Vector reduced = (z.row(r) - top.sigma * top.u(r) * vt).transpose();
        return head.logits(reduced).maxCoeff();
      });
      break;
    }
    case Method::kGradNorm: {
      const RowMatrix f = logits();
      out.scores = map_indices(n, par, [&](std::size_t i) { return scoring::gradnorm(row(z, i), row(f, i)); });
      break;
    }
    case Method::kRelation: {
      const auto& index = need(need_stats(in).knn, "relation support set");
      const double power = cfg.get("pow");
      out.scores = map_indices(n, par, [&](std::size_t i) { return scoring::relation(row(z, i), index.points, power); });
      break;
    }
    case Method::kOpenMax: {
      auto model = need(need_stats(in).openmax, "OpenMax tails");
      model.alpha_top = static_cast<std::size_t>(cfg.get("alpha_top"));
      const RowMatrix f = logits();
      out.scores = map_indices(n, par, [&](std::size_t i) { return scoring::openmax(row(f, i), model); });
      break;
    }
    case Method::kDice: {
      const auto& head = need_head(in);
      const auto& s = need_stats(in);
      const auto& mask = need(s.dice, "DICE mask");
      if (mask.sparsity != cfg.get("sparsity")) {
        throw Error(ErrorCode::kMissingArtifact, "DICE mask fitted at another sparsity");
      }
      if (!par) {
        out.scores = map_indices(n, false, [&](std::size_t i) { return scoring::dice(row(z, i), head, mask.mask); });
        break;
      }
      if (mask.mask.rows() != head.weights.rows() || mask.mask.cols() != head.weights.cols()) {
        throw Error(ErrorCode::kDimensionMismatch, "DICE mask shape does not match head");
      }
      const RowMatrix masked = mask.mask.cwiseProduct(head.weights);
      out.scores = map_indices(n, true, [&](std::size_t i) {
        return log_sum_exp(masked * row(z, i) + head.bias);
      });
      break;
    }
  }
  return out;
}

}  // namespace oodkit
