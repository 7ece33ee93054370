#include "oodkit/fit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oodkit/linalg.hpp"

namespace oodkit {

void FittedStats::check_feature_dim(std::size_t d) const {
  if (feature_dim != d) {
    throw Error(ErrorCode::kDimensionMismatch,
                "dimension mismatch: stats fitted with d=" + std::to_string(feature_dim) +
                    ", data has d=" + std::to_string(d));
  }
}

namespace {

const std::vector<std::int32_t>& require_labels(const FeatureSet& fs) {
  if (!fs.labels) throw Error(ErrorCode::kMissingInput, "labels required");
  return *fs.labels;
}

std::size_t class_count(const FeatureSet& fs, std::size_t hint) {
  if (hint) return hint;
  if (fs.num_classes) return fs.num_classes;
  if (fs.logits) return static_cast<std::size_t>(fs.logits->cols());
  std::int32_t max_label = -1;
  for (auto y : require_labels(fs)) max_label = std::max(max_label, y);
  return static_cast<std::size_t>(max_label + 1);
}

RowMatrix rows_of(const RowMatrix& m, const std::vector<Eigen::Index>& idx) {
  RowMatrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

std::vector<std::vector<Eigen::Index>> members_by_label(const FeatureSet& fs, std::size_t classes) {
  std::vector<std::vector<Eigen::Index>> out(classes);
  const auto& labels = require_labels(fs);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    if (y >= classes) throw Error(ErrorCode::kInvalidArgument, "label out of range");
    out[y].push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

std::vector<std::size_t> predictions(const RowMatrix& logits) {
  std::vector<std::size_t> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = argmax(logits.row(i).transpose());
  }
  return out;
}

void require_head_dim(const FeatureSet& fs, const LinearHead& head) {
  if (head.feature_dim() != fs.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "feature_dim mismatch between head and features");
  }
}

}  // namespace

RowMatrix fit_class_means(const FeatureSet& train, std::size_t num_classes) {
  const std::size_t classes = class_count(train, num_classes);
  const auto& labels = require_labels(train);
  RowMatrix sums = RowMatrix::Zero(static_cast<Eigen::Index>(classes), train.features.cols());
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    if (y >= classes) throw Error(ErrorCode::kInvalidArgument, "label out of range");
    sums.row(static_cast<Eigen::Index>(y)) += train.features.row(static_cast<Eigen::Index>(i));
    ++counts[y];
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] == 0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "class " + std::to_string(c) + " has no training samples");
    }
    sums.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(counts[c]);
  }
  return sums;
}

Matrix fit_shared_cov_inv(const FeatureSet& train, const RowMatrix& means, double shrinkage) {
  const auto& labels = require_labels(train);
  if (train.size() == 0) throw Error(ErrorCode::kInvalidArgument, "empty training set");
  RowMatrix centered = train.features;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    centered.row(static_cast<Eigen::Index>(i)) -= means.row(labels[i]);
  }
  const Matrix cov = linalg::covariance(centered, Vector::Zero(centered.cols()));
  return linalg::regularized_inverse(cov, shrinkage);
}

std::vector<Matrix> fit_class_cov_inv(const FeatureSet& train, const RowMatrix& means,
                                      double shrinkage) {
  const auto classes = static_cast<std::size_t>(means.rows());
  const auto members = members_by_label(train, classes);
  std::vector<Matrix> out(classes);
  std::vector<std::exception_ptr> errors(classes);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(classes); ++c) {
    try {
      const auto cls = static_cast<std::size_t>(c);
      const RowMatrix x = rows_of(train.features, members[cls]);
      out[cls] = linalg::regularized_inverse(linalg::covariance(x, means.row(c).transpose()),
                                             shrinkage);
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

BackgroundGaussian fit_background_gaussian(const FeatureSet& train, double shrinkage) {
  if (train.size() == 0) throw Error(ErrorCode::kInvalidArgument, "empty training set");
  BackgroundGaussian out;
  out.mean = train.features.colwise().mean().transpose();
  out.cov_inv = linalg::regularized_inverse(linalg::covariance(train.features, out.mean), shrinkage);
  return out;
}

PrincipalSubspace fit_principal_subspace(const FeatureSet& train, std::size_t dim) {
  if (dim > train.dim()) {
    throw Error(ErrorCode::kInvalidArgument, "subspace dimension " + std::to_string(dim) +
                                                 " exceeds feature dimension " +
                                                 std::to_string(train.dim()));
  }
  if (train.size() == 0) throw Error(ErrorCode::kInvalidArgument, "empty training set");
  PrincipalSubspace out;
  out.train_mean = train.features.colwise().mean().transpose();
  const auto pairs = linalg::top_eigenpairs(linalg::covariance(train.features, out.train_mean), dim);
  out.basis = pairs.vectors;
  out.eigenvalues = pairs.values;
  return out;
}

double residual_norm(const Eigen::Ref<const Vector>& z, const PrincipalSubspace& s) {
  Vector centered = z - s.train_mean;
  if (s.rank() == 0) return centered.norm();
  const Vector coeffs = s.basis.transpose() * centered;
  centered.noalias() -= s.basis * coeffs;
  return centered.norm();
}

double fit_vim_alpha(const FeatureSet& train, const LinearHead& head, const PrincipalSubspace& s) {
  require_head_dim(train, head);
  const RowMatrix logits = logits_or_head(train, &head);
  double max_logit_sum = 0.0;
  double residual_sum = 0.0;
  for (Eigen::Index i = 0; i < train.features.rows(); ++i) {
    max_logit_sum += logits.row(i).maxCoeff();
    residual_sum += residual_norm(train.features.row(i).transpose(), s);
  }
  // A full-rank subspace leaves only rounding noise in the residual.
  double scale = 0.0;
  for (Eigen::Index i = 0; i < train.features.rows(); ++i) {
    scale += (train.features.row(i).transpose() - s.train_mean).norm();
  }
  if (!(residual_sum > 1e-10 * scale)) {
    throw Error(ErrorCode::kDegenerate, "degenerate residual");
  }
  const double alpha = max_logit_sum / residual_sum;
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw Error(ErrorCode::kInvalidArgument,
                "ViM alpha must be positive (mean training max-logit is not positive)");
  }
  return alpha;
}

KnnIndex fit_knn_index(const FeatureSet& train, std::size_t cap, std::uint64_t seed) {
  std::vector<Eigen::Index> keep(train.size());
  std::iota(keep.begin(), keep.end(), Eigen::Index{0});
  if (cap > 0 && keep.size() > cap) {
    std::mt19937_64 rng(seed);
    std::shuffle(keep.begin(), keep.end(), rng);
    keep.resize(cap);
    std::sort(keep.begin(), keep.end());
  }
  KnnIndex index;
  index.seed = seed;
  index.cap = cap;
  index.points = rows_of(train.features, keep);
  for (Eigen::Index i = 0; i < index.points.rows(); ++i) {
    const double norm = index.points.row(i).norm();
    if (norm == 0.0) {
      throw Error(ErrorCode::kDegenerate,
                  "zero-norm feature vector at sample " + std::to_string(keep[static_cast<std::size_t>(i)]));
    }
    index.points.row(i) /= norm;
  }
  return index;
}

Prototypes fit_prototypes(const FeatureSet& val, const LinearHead* head) {
  if (val.size() == 0) throw Error(ErrorCode::kInvalidArgument, "empty validation set");
  const RowMatrix logits = logits_or_head(val, head);
  const auto classes = logits.cols();
  Prototypes out;
  out.dists = RowMatrix::Zero(classes, classes);
  std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto p = softmax(logits.row(i).transpose());
    const auto c = static_cast<Eigen::Index>(argmax(p.probs));
    out.dists.row(c) += p.probs.transpose();
    ++counts[static_cast<std::size_t>(c)];
  }
  out.uniform_fallback.assign(static_cast<std::size_t>(classes), false);
  for (Eigen::Index c = 0; c < classes; ++c) {
    const auto n = counts[static_cast<std::size_t>(c)];
    if (n == 0) {
      out.dists.row(c).setConstant(1.0 / static_cast<double>(classes));
      out.uniform_fallback[static_cast<std::size_t>(c)] = true;
    } else {
      out.dists.row(c) /= static_cast<double>(n);
    }
  }
  return out;
}

double temperature_nll(const RowMatrix& logits, std::span<const std::int32_t> labels, double t) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Vector f = logits.row(i).transpose();
    total += log_sum_exp(f, t) / t - f(labels[static_cast<std::size_t>(i)]) / t;
  }
  return total / static_cast<double>(logits.rows());
}

double fit_temperature(const FeatureSet& val, const LinearHead* head) {
  const auto& labels = require_labels(val);
  if (val.size() == 0) throw Error(ErrorCode::kInvalidArgument, "empty validation set");
  const RowMatrix logits = logits_or_head(val, head);
  auto nll = [&](double log_t) { return temperature_nll(logits, labels, std::exp(log_t)); };

  // NLL is convex in 1/T, hence unimodal in log T.
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(0.01), b = std::log(100.0);
  double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
  double f1 = nll(x1), f2 = nll(x2);
  while (b - a > 1e-4) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = nll(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = nll(x2);
    }
  }
  const double best = 0.5 * (a + b);
  return nll(best) <= nll(0.0) ? std::exp(best) : 1.0;
}

double percentile_linear(std::vector<double> values, double percentile) {
  if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "percentile of empty set");
  if (!(percentile >= 0.0 && percentile <= 100.0)) {
    throw Error(ErrorCode::kInvalidArgument, "percentile must be in [0, 100]");
  }
  const double pos = percentile / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double v_lo = values[lo];
  if (frac == 0.0 || lo + 1 >= values.size()) return v_lo;
  const double v_hi = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
  return v_lo + frac * (v_hi - v_lo);
}

double fit_react_threshold(const FeatureSet& train, double percentile) {
  std::vector<double> pooled(train.features.data(), train.features.data() + train.features.size());
  return percentile_linear(std::move(pooled), percentile);
}

std::size_t kept_count(std::size_t n, double percent_pruned) {
  const auto pruned = static_cast<std::size_t>(std::llround(static_cast<double>(n) * percent_pruned / 100.0));
  return n - std::min(n, pruned);
}

DiceMask fit_dice_mask(const FeatureSet& train, const LinearHead& head, double sparsity) {
  require_head_dim(train, head);
  if (train.size() == 0) throw Error(ErrorCode::kInvalidArgument, "empty training set");
  const Vector mean = train.features.colwise().mean().transpose();
  const auto d = static_cast<std::size_t>(head.feature_dim());
  const std::size_t keep = kept_count(d, sparsity);
  DiceMask out;
  out.sparsity = sparsity;
  out.mask = RowMatrix::Zero(head.weights.rows(), head.weights.cols());
  std::vector<Eigen::Index> order(d);
  for (Eigen::Index c = 0; c < head.weights.rows(); ++c) {
    const Vector contrib = head.weights.row(c).transpose().cwiseProduct(mean);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return contrib(a) > contrib(b); });
    for (std::size_t k = 0; k < keep; ++k) out.mask(c, order[k]) = 1.0;
  }
  out.degenerate = keep == 0;
  return out;
}

ShePatterns fit_she_patterns(const FeatureSet& train, const LinearHead& head) {
  require_head_dim(train, head);
  const auto& labels = require_labels(train);
  const auto classes = static_cast<std::size_t>(head.num_classes());
  const auto preds = predictions(logits_or_head(train, &head));
  ShePatterns out;
  out.patterns = RowMatrix::Zero(static_cast<Eigen::Index>(classes), train.features.cols());
  out.class_mean_fallback.assign(classes, false);
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    if (y >= classes) throw Error(ErrorCode::kInvalidArgument, "label out of range");
    if (preds[i] != y) continue;
    out.patterns.row(static_cast<Eigen::Index>(y)) += train.features.row(static_cast<Eigen::Index>(i));
    ++counts[y];
  }
  RowMatrix means;
  for (std::size_t c = 0; c < classes; ++c) {
    const auto row = static_cast<Eigen::Index>(c);
    if (counts[c] > 0) {
      out.patterns.row(row) /= static_cast<double>(counts[c]);
      continue;
    }
    if (means.size() == 0) means = fit_class_means(train, classes);
    out.patterns.row(row) = means.row(row);
    out.class_mean_fallback[c] = true;
  }
  return out;
}

OpenMaxModel fit_openmax_tails(const FeatureSet& train, const LinearHead& head,
                               std::size_t tail_size, std::size_t alpha_top) {
  require_head_dim(train, head);
  if (tail_size < 2) throw Error(ErrorCode::kInvalidArgument, "OpenMax tail size must be >= 2");
  if (alpha_top < 1) throw Error(ErrorCode::kInvalidArgument, "OpenMax alpha_top must be >= 1");
  const auto& labels = require_labels(train);
  const auto classes = static_cast<std::size_t>(head.num_classes());
  const RowMatrix logits = logits_or_head(train, &head);
  const auto preds = predictions(logits);

  std::vector<std::vector<Eigen::Index>> correct(classes), all(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    if (y >= classes) throw Error(ErrorCode::kInvalidArgument, "label out of range");
    all[y].push_back(static_cast<Eigen::Index>(i));
    if (preds[i] == y) correct[y].push_back(static_cast<Eigen::Index>(i));
  }

  OpenMaxModel out;
  out.tail_size = tail_size;
  out.alpha_top = alpha_top;
  out.mavs = RowMatrix::Zero(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(classes));
  out.tails.assign(classes, WeibullTail{});
  std::vector<std::exception_ptr> errors(classes);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(classes); ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    try {
      const auto& members = correct[c].empty() ? all[c] : correct[c];
      if (members.empty()) continue;
      const RowMatrix av = rows_of(logits, members);
      out.mavs.row(ci) = av.colwise().mean();
      if (correct[c].size() < 2) continue;
      std::vector<double> dist(members.size());
      for (std::size_t k = 0; k < members.size(); ++k) {
        dist[k] = (av.row(static_cast<Eigen::Index>(k)) - out.mavs.row(ci)).norm();
      }
      std::sort(dist.begin(), dist.end(), std::greater<>());
      WeibullTail& tail = out.tails[c];
      tail.shrunk = dist.size() < tail_size;
      dist.resize(std::min(dist.size(), tail_size));
      tail.samples = dist.size();
      try {
        tail.params = fit_weibull(dist);
        tail.valid = true;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kDegenerate) throw;
      }
    } catch (...) {
      errors[c] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::size_t resolve_subspace_dim(const MethodConfig& cfg, std::size_t d) {
  const double dim = cfg.get("dim");
  if (dim < 0) return std::min<std::size_t>(256, d / 2);
  return static_cast<std::size_t>(dim);
}

namespace {

const FeatureSet& require_train(const FitInputs& in) {
  if (!in.train) throw Error(ErrorCode::kMissingInput, "training features required");
  return *in.train;
}

const FeatureSet& require_val(const FitInputs& in) {
  if (!in.val) throw Error(ErrorCode::kMissingInput, "validation features required");
  return *in.val;
}

const LinearHead& require_head(const FitInputs& in) {
  if (!in.head) throw Error(ErrorCode::kMissingInput, "linear head required");
  return *in.head;
}

void ensure_class_means(FittedStats& s, const FitInputs& in) {
  if (!s.class_means) s.class_means = fit_class_means(require_train(in), s.num_classes);
}

void ensure_subspace(FittedStats& s, const FitInputs& in, std::size_t dim) {
  if (s.subspace && s.subspace->rank() == dim) return;
  s.subspace = fit_principal_subspace(require_train(in), dim);
  s.train_mean = s.subspace->train_mean;
  s.vim_alpha.reset();
}

}  // namespace

void ensure_fitted(FittedStats& s, const MethodConfig& cfg, const FitInputs& in) {
  if (in.train) {
    if (s.feature_dim == 0) s.feature_dim = in.train->dim();
    s.check_feature_dim(in.train->dim());
  }
  if (s.num_classes == 0) {
    if (in.head) s.num_classes = in.head->num_classes();
    else if (in.train) s.num_classes = class_count(*in.train, 0);
  }
  const double eps = in.options.shrinkage;
  switch (cfg.method()) {
    case Method::kTempScale:
      if (!s.temperature) s.temperature = fit_temperature(require_val(in), in.head);
      break;
    case Method::kKlMatching:
      if (!s.prototypes) s.prototypes = fit_prototypes(require_val(in), in.head);
      break;
    case Method::kMahalanobis:
      ensure_class_means(s, in);
      if (!s.shared_cov_inv) s.shared_cov_inv = fit_shared_cov_inv(require_train(in), *s.class_means, eps);
      break;
    case Method::kRmds:
      ensure_class_means(s, in);
      if (!s.class_cov_inv) s.class_cov_inv = fit_class_cov_inv(require_train(in), *s.class_means, eps);
      if (!s.background_mean || !s.background_cov_inv) {
        auto bg = fit_background_gaussian(require_train(in), eps);
        s.background_mean = std::move(bg.mean);
        s.background_cov_inv = std::move(bg.cov_inv);
      }
      break;
    case Method::kKnn:
    case Method::kRelation:
      if (!s.knn) s.knn = fit_knn_index(require_train(in), in.options.knn_cap, in.options.seed);
      break;
    case Method::kFdbd:
      if (!s.train_mean) s.train_mean = require_train(in).features.colwise().mean().transpose();
      break;
    case Method::kVim:
      ensure_subspace(s, in, resolve_subspace_dim(cfg, require_train(in).dim()));
      if (!s.vim_alpha) s.vim_alpha = fit_vim_alpha(require_train(in), require_head(in), *s.subspace);
      break;
    case Method::kResidual:
      ensure_subspace(s, in, resolve_subspace_dim(cfg, require_train(in).dim()));
      break;
    case Method::kReact: {
      const double pct = cfg.get("percentile");
      if (!s.react_threshold || s.react_percentile != pct) {
        s.react_threshold = fit_react_threshold(require_train(in), pct);
        s.react_percentile = pct;
      }
      break;
    }
    case Method::kShe:
      if (!s.she) s.she = fit_she_patterns(require_train(in), require_head(in));
      break;
    case Method::kOpenMax: {
      const auto eta = static_cast<std::size_t>(cfg.get("eta"));
      const auto top = static_cast<std::size_t>(cfg.get("alpha_top"));
      if (!s.openmax || s.openmax->tail_size != eta) {
        s.openmax = fit_openmax_tails(require_train(in), require_head(in), eta, top);
      }
      s.openmax->alpha_top = top;
      break;
    }
    case Method::kDice: {
      const double sparsity = cfg.get("sparsity");
      if (!s.dice || s.dice->sparsity != sparsity) {
        s.dice = fit_dice_mask(require_train(in), require_head(in), sparsity);
      }
      break;
    }
    default:
      break;
  }
}

}  // namespace oodkit
