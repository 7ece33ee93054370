#include <doctest.h>

#include <cmath>
#include <limits>

#include "oodkit/methods.hpp"
#include "oodkit/types.hpp"

using namespace oodkit;

namespace {

FeatureSet small_set(Eigen::Index n, Eigen::Index d) {
  FeatureSet fs;
  fs.features = RowMatrix::Constant(n, d, 0.5);
  return fs;
}

LinearHead head_of(Eigen::Index c, Eigen::Index d) {
  LinearHead h;
  h.weights = RowMatrix::Ones(c, d);
  h.bias = Vector::Zero(c);
  return h;
}

bool has_violation(const ValidationResult& r, const std::string& text) {
  for (const auto& v : r.violations) {
    if (v.message.find(text) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("validate_feature_set accepts consistent dimensions") {
  const auto fs = small_set(3, 4);
  const auto head = head_of(5, 4);
  CHECK(validate_feature_set(fs, &head).ok());
}

TEST_CASE("validate_feature_set reports a head of another width") {
  const auto fs = small_set(3, 4);
  const auto head = head_of(5, 5);
  const auto r = validate_feature_set(fs, &head);
  CHECK_FALSE(r.ok());
  CHECK(has_violation(r, "feature_dim mismatch"));
}

TEST_CASE("validate_feature_set locates a NaN") {
  auto fs = small_set(3, 4);
  fs.features(1, 2) = std::numeric_limits<double>::quiet_NaN();
  const auto before = fs.features;
  const auto r = validate_feature_set(fs);
  CHECK(has_violation(r, "non-finite at (1,2)"));
  // never mutates its input
  CHECK(std::isnan(fs.features(1, 2)));
  CHECK(fs.features.cwiseEqual(before).count() == before.size() - 1);
}

TEST_CASE("labels and logits are checked against C") {
  auto fs = small_set(2, 3);
  fs.num_classes = 2;
  fs.labels = std::vector<std::int32_t>{0, 2};
  fs.logits = RowMatrix::Zero(2, 3);
  const auto r = validate_feature_set(fs);
  CHECK(has_violation(r, "label out of range at 1"));
  CHECK(has_violation(r, "logits column count mismatch"));
}

TEST_CASE("augmented stacks must be probability rows") {
  AugmentedDump aug;
  aug.dropout_samples = 2;
  RowMatrix stack(1, 4);
  stack << 0.5, 0.5, 0.7, 0.2;
  aug.dropout_prob_stacks = stack;
  CHECK_FALSE(validate_augmented(aug, 1, 2).ok());
  (*aug.dropout_prob_stacks)(0, 3) = 0.3;
  CHECK(validate_augmented(aug, 1, 2).ok());
  aug.dropout_samples = 0;
  CHECK_FALSE(validate_augmented(aug, 1, 2).ok());
}

TEST_CASE("softmax examples") {
  Vector f(2);
  f << 0.0, 0.0;
  auto p = softmax(f);
  CHECK(p.probs(0) == doctest::Approx(0.5).epsilon(1e-15));

  f << std::log(2.0), 0.0;
  p = softmax(f);
  CHECK(std::abs(p.probs(0) - 2.0 / 3.0) < 1e-15);
  CHECK(std::abs(p.probs(1) - 1.0 / 3.0) < 1e-15);

  Vector g(3);
  g << 5.0, 1.0, 1.0;
  p = softmax(g, 1e6);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(std::abs(p.probs(i) - 1.0 / 3.0) < 1e-6);
}

TEST_CASE("softmax rejects non-positive temperature") {
  Vector f = Vector::Zero(3);
  CHECK_THROWS_AS(softmax(f, 0.0), Error);
  CHECK_THROWS_AS(softmax(f, -1.0), Error);
}

TEST_CASE("softmax is shift invariant and sums to one") {
  Vector f(4);
  f << 0.3, -2.0, 5.5, 1.25;
  const auto a = softmax(f);
  const auto b = softmax((f.array() + 7.0).matrix());
  CHECK((a.probs - b.probs).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(a.probs.sum() - 1.0) < 1e-12);
}

TEST_CASE("log_sum_exp survives large logits") {
  Vector f(3);
  f << 1000.0, 999.0, -1000.0;
  const double v = log_sum_exp(f);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(1000.0 + std::log1p(std::exp(-1.0))).epsilon(1e-14));
  Vector g(2);
  g << 2.0, 0.0;
  CHECK(log_sum_exp(g, 2.0) == doctest::Approx(2.0 * std::log(1.0 + std::exp(1.0))).epsilon(1e-14));
}

TEST_CASE("argmax ties go to the lower index") {
  Vector v(4);
  v << 1.0, 3.0, 3.0, 0.0;
  CHECK(argmax(v) == 1);
}

TEST_CASE("logits_or_head prefers dump logits") {
  auto fs = small_set(2, 3);
  const auto head = head_of(2, 3);
  CHECK(logits_or_head(fs, &head)(0, 0) == doctest::Approx(1.5));
  fs.logits = RowMatrix::Constant(2, 2, 9.0);
  CHECK(logits_or_head(fs, &head)(1, 1) == 9.0);
  fs.logits.reset();
  CHECK_THROWS_AS(logits_or_head(fs, nullptr), Error);
}

TEST_CASE("method catalogue") {
  CHECK(all_methods().size() == 22);
  for (Method m : all_methods()) CHECK(parse_method(method_id(m)) == m);
  CHECK_THROWS_AS(parse_method("nope"), Error);
  CHECK(parse_method_list("msp,vim").size() == 2);
  CHECK(parse_method_list("all").size() == 22);

  MethodConfig gen(Method::kGen);
  CHECK(gen.get("gamma") == 0.01);
  CHECK(gen.get("M") == 10);
  gen.set("M", 50).set("gamma", 0.1);
  CHECK(gen.describe() == "M=50;gamma=0.1");
  CHECK_THROWS_AS(gen.set("gamma", 1.0), Error);
  CHECK_THROWS_AS(gen.set("K", 5), Error);
  CHECK_THROWS_AS(MethodConfig(Method::kKnn).set("K", 2.5), Error);
  CHECK(MethodConfig(Method::kReact).get("percentile") == 99);
  CHECK(MethodConfig(Method::kOdin).get("noise") == 0.0014);
}
