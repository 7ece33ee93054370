#include "oodkit/types.hpp"

#include <cmath>
#include <sstream>

namespace oodkit {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kIo: return "i/o failure";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kUnsupportedVersion: return "unsupported version";
    case ErrorCode::kUnsupportedDtype: return "unsupported dtype";
    case ErrorCode::kTruncatedPayload: return "truncated payload";
    case ErrorCode::kTrailingBytes: return "trailing bytes";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kFlagPayloadMismatch: return "flag/payload mismatch";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kDimensionOverflow: return "dimension overflow";
    case ErrorCode::kMissingArtifact: return "missing artifact";
    case ErrorCode::kMissingInput: return "missing input channel";
    case ErrorCode::kDegenerate: return "degenerate input";
    case ErrorCode::kNotConverged: return "not converged";
    case ErrorCode::kAccessDenied: return "access denied";
  }
  return "unknown";
}

RowMatrix LinearHead::batch_logits(const RowMatrix& features) const {
  RowMatrix out = features * weights.transpose();
  out.rowwise() += bias.transpose();
  return out;
}

std::string ValidationResult::summary() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) os << "; ";
    os << violations[i].message;
  }
  return os.str();
}

namespace {

void check_finite(const RowMatrix& m, const char* what, ValidationResult& out) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (!std::isfinite(m(i, j))) {
        std::ostringstream os;
        os << "non-finite at (" << i << "," << j << ")";
        if (std::string(what) != "features") os << " in " << what;
        out.violations.push_back({os.str()});
        return;
      }
    }
  }
}

}  // namespace

ValidationResult validate_feature_set(const FeatureSet& fs, const LinearHead* head) {
  ValidationResult out;
  const std::size_t n = fs.size();
  if (fs.dim() < 1) out.violations.push_back({"feature_dim must be >= 1"});
  check_finite(fs.features, "features", out);

  std::size_t classes = fs.num_classes;
  if (head) {
    if (head->feature_dim() != fs.dim()) {
      out.violations.push_back({"feature_dim mismatch"});
    }
    if (static_cast<std::size_t>(head->bias.size()) != head->num_classes()) {
      out.violations.push_back({"head bias length mismatch"});
    }
    if (classes == 0) {
      classes = head->num_classes();
    } else if (classes != head->num_classes()) {
      out.violations.push_back({"num_classes mismatch with head"});
    }
  }
  if (fs.logits) {
    if (static_cast<std::size_t>(fs.logits->rows()) != n) {
      out.violations.push_back({"logits row count mismatch"});
    }
    const auto cols = static_cast<std::size_t>(fs.logits->cols());
    if (classes == 0) {
      classes = cols;
    } else if (cols != classes) {
      out.violations.push_back({"logits column count mismatch"});
    }
    check_finite(*fs.logits, "logits", out);
  }
  if (fs.labels) {
    if (fs.labels->size() != n) {
      out.violations.push_back({"labels length mismatch"});
    }
    for (std::size_t i = 0; i < fs.labels->size(); ++i) {
      const auto y = (*fs.labels)[i];
      if (y < 0 || (classes > 0 && static_cast<std::size_t>(y) >= classes)) {
        out.violations.push_back({"label out of range at " + std::to_string(i)});
        break;
      }
    }
  }
  if (fs.ids && fs.ids->size() != n) {
    out.violations.push_back({"ids length mismatch"});
  }
  return out;
}

ValidationResult validate_augmented(const AugmentedDump& aug, std::size_t n,
                                    std::size_t num_classes) {
  ValidationResult out;
  if (aug.dropout_prob_stacks) {
    const auto& s = *aug.dropout_prob_stacks;
    const std::size_t t = aug.dropout_samples;
    if (t < 1) {
      out.violations.push_back({"dropout sample count must be >= 1"});
      return out;
    }
    if (static_cast<std::size_t>(s.rows()) != n ||
        static_cast<std::size_t>(s.cols()) != t * num_classes) {
      out.violations.push_back({"dropout stack shape mismatch"});
      return out;
    }
    check_finite(s, "dropout stack", out);
    for (std::size_t i = 0; i < n && out.ok(); ++i) {
      for (std::size_t k = 0; k < t; ++k) {
        double sum = 0.0;
        for (std::size_t c = 0; c < num_classes; ++c) {
          const double p = s(i, k * num_classes + c);
          if (p < 0.0 || p > 1.0) {
            out.violations.push_back({"dropout probability outside [0,1]"});
            return out;
          }
          sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-6) {
          std::ostringstream os;
          os << "dropout slice (" << i << "," << k << ") does not sum to 1";
          out.violations.push_back({os.str()});
          return out;
        }
      }
    }
  }
  if (aug.odin_logits) {
    if (static_cast<std::size_t>(aug.odin_logits->rows()) != n ||
        static_cast<std::size_t>(aug.odin_logits->cols()) != num_classes) {
      out.violations.push_back({"odin logits shape mismatch"});
    }
    check_finite(*aug.odin_logits, "odin logits", out);
  }
  return out;
}

ProbVector softmax(const Eigen::Ref<const Vector>& logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "softmax temperature must be positive");
  }
  ProbVector out;
  if (logits.size() == 0) return out;
  const double shift = logits.maxCoeff();
  out.probs = ((logits.array() - shift) / temperature).exp().matrix();
  out.probs /= out.probs.sum();
  return out;
}

double log_sum_exp(const Eigen::Ref<const Vector>& logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "temperature must be positive");
  }
  const double shift = logits.maxCoeff();
  const double s = ((logits.array() - shift) / temperature).exp().sum();
  return shift + temperature * std::log(s);
}

std::size_t argmax(const Eigen::Ref<const Vector>& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  }
  return best;
}

RowMatrix logits_or_head(const FeatureSet& fs, const LinearHead* head) {
  if (fs.logits) return *fs.logits;
  if (!head) {
    throw Error(ErrorCode::kMissingInput, "logits absent and no linear head supplied");
  }
  if (head->feature_dim() != fs.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "feature_dim mismatch between head and features");
  }
  return head->batch_logits(fs.features);
}

}  // namespace oodkit
