#include <doctest.h>

#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "oodkit/fit.hpp"
#include "oodkit/scores.hpp"
#include "score_oracles.hpp"

using namespace oodkit;
namespace sc = oodkit::scoring;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

RowMatrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  RowMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double x : r) m(i, j++) = x;
    ++i;
  }
  return m;
}

LinearHead head_of(RowMatrix w, Vector b) {
  LinearHead h;
  h.weights = std::move(w);
  h.bias = std::move(b);
  return h;
}

MethodConfig small_config(Method m) {
  MethodConfig cfg(m);
  if (m == Method::kKnn) cfg.set("K", 5);
  if (m == Method::kOpenMax) cfg.set("eta", 6).set("alpha_top", 2);
  if (m == Method::kVim || m == Method::kResidual) cfg.set("dim", 3);
  if (m == Method::kAsh) cfg.set("percentile", 70);
  if (m == Method::kDice) cfg.set("sparsity", 50);
  if (m == Method::kReact) cfg.set("percentile", 90);
  return cfg;
}

}  // namespace

TEST_CASE("MSP, MLS and Energy examples") {
  CHECK(sc::msp(vec({0, 0, 0, 0})) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(std::abs(sc::msp(vec({std::log(2.0), 0})) - 2.0 / 3.0) < 1e-15);
  const Vector f = vec({0.3, -1.2, 2.2});
  CHECK(std::abs(sc::msp(f) - sc::msp((f.array() + 7.0).matrix())) < 1e-12);

  CHECK(sc::mls(vec({3.2, -1, 0.5})) == 3.2);
  CHECK(sc::mls(vec({0, 0})) == 0.0);

  CHECK(std::abs(sc::energy(vec({0, 0}), 1.0) - 0.693147) < 1e-6);
  CHECK(std::abs(sc::energy(vec({2, 0}), 2.0) - 2.0 * std::log(1.0 + std::exp(1.0))) < 1e-14);
  CHECK(std::abs(sc::energy(vec({2, 0}), 2.0) - 2.62652) < 1e-5);
  CHECK(sc::energy(f, 1.0) >= sc::mls(f));
  CHECK(sc::energy(f, 1.0) <= sc::mls(f) + std::log(3.0));
}

TEST_CASE("TempScale and GEN examples") {
  const Vector f = vec({1.2, 0.4, -0.7});
  CHECK(sc::tempscale(f, 1.0) == sc::msp(f));
  CHECK(std::abs(sc::tempscale(f, 1e9) - 1.0 / 3.0) < 1e-8);
  CHECK(std::abs(sc::tempscale(vec({1, 0}), 0.5) - 0.880797) < 1e-6);

  const Vector onehot = vec({800, 0, 0});
  CHECK(sc::gen(onehot, 0.1, 10) <= 0.0);
  CHECK(sc::gen(onehot, 0.1, 10) > -1e-12);
  CHECK(std::abs(sc::gen(vec({0, 0}), 0.5, 2) + 1.0) < 1e-15);
  CHECK(std::abs(sc::gen(vec({900, 0}), 0.5, 1) - sc::gen(vec({900, 0}), 0.5, 2)) < 1e-15);
  CHECK(sc::gen(vec({0.1, 0.2, 0.3, 0.4}), 0.1, 2, true) == sc::gen(vec({0.1, 0.2, 0.3, 0.4}), 0.1, 4));
}

TEST_CASE("MCDropout and ODIN") {
  CHECK(sc::mcdropout(mat({{0, 1, 0}, {0, 1, 0}})) == 0.0);
  CHECK(std::abs(sc::mcdropout(mat({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}})) + std::log(4.0)) < 1e-15);
  const Vector f = vec({0.5, 2.0, -1.0});
  CHECK(sc::odin(f, 1.0) == sc::msp(f));
  CHECK(std::abs(sc::odin(f, 1000.0) - 1.0 / 3.0) < 1e-3);
}

TEST_CASE("KL matching") {
  const RowMatrix protos = mat({{0.7, 0.2, 0.1}, {0.1, 0.1, 0.8}});
  CHECK(std::abs(sc::klmatch(vec({std::log(0.1), std::log(0.1), std::log(0.8)}), protos)) < 1e-14);
  CHECK(std::abs(sc::klmatch(vec({1000, 0}), mat({{0.5, 0.5}})) + std::log(2.0)) < 1e-12);
  CHECK(sc::klmatch(vec({0.4, -2, 1}), protos) <= 0.0);
  // exact zeros in a prototype are floored
  CHECK(std::isfinite(sc::klmatch(vec({0, 0}), mat({{1, 0}}))));
}

TEST_CASE("Mahalanobis and RMDS") {
  const Matrix eye = Matrix::Identity(2, 2);
  CHECK(sc::mahalanobis(vec({3, 4}), mat({{0, 0}}), eye) == -25.0);
  CHECK(sc::mahalanobis(vec({1, 0}), mat({{0, 0}, {10, 0}}), eye) == -1.0);
  Matrix inv(2, 2);
  inv << 0.25, 0, 0, 1;
  CHECK(sc::mahalanobis(vec({2, 0}), mat({{0, 0}}), inv) == -1.0);

  Matrix cov_inv(2, 2);
  cov_inv << 2.0, 0.3, 0.3, 0.5;
  const Vector mu = vec({1, -1});
  RowMatrix means(1, 2);
  means.row(0) = mu.transpose();
  CHECK(std::abs(sc::rmds(vec({4, 7}), means, {cov_inv}, mu, cov_inv)) < 1e-12);
  const RowMatrix two = mat({{0, 0}, {3, 1}});
  CHECK(sc::rmds(mu, two, {eye, cov_inv}, mu, cov_inv) == doctest::Approx(-2.0));
}

TEST_CASE("KNN") {
  KnnIndex index;
  index.points = mat({{1, 0}, {0, 1}});
  CHECK(sc::knn(vec({5, 0}), index, 1) == 0.0);
  CHECK_THROWS_AS(sc::knn(vec({1, 0}), index, 3), Error);
}

TEST_CASE("fDBD") {
  const auto h = head_of(mat({{1, 0}, {-1, 0}}), Vector::Zero(2));
  const Vector mu = Vector::Zero(2);
  CHECK(std::abs(sc::fdbd(vec({2, 0}), h, mu) - 1.0) < 1e-15);
  CHECK(std::abs(sc::fdbd(vec({4, 0}), h, mu) - 1.0) < 1e-15);
  CHECK(sc::fdbd(vec({4, 0}), h, mu, true, true) == -1.0);
  const auto same = head_of(mat({{1, 0}, {1, 0}}), Vector::Zero(2));
  try {
    sc::fdbd(vec({1, 1}), same, mu);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()) == "degenerate class pair");
  }
}

TEST_CASE("ViM and Residual") {
  PrincipalSubspace s;
  s.train_mean = vec({1, 1, 1, 1, 1});
  s.basis = Matrix::Zero(5, 2);
  s.basis(0, 0) = 1;
  s.basis(1, 1) = 1;
  const Vector f = vec({0.2, 1.5});
  const Vector z = vec({3, -2, 4, 1, 2});
  CHECK(sc::vim(z, f, s, 0.0) == sc::energy(f, 1.0));
  CHECK(sc::vim(vec({5, -3, 1, 1, 1}), f, s, 7.0) == log_sum_exp(f));
  CHECK(sc::residual(s.train_mean, s) == 0.0);
  CHECK(std::abs(sc::residual(z, s) + std::sqrt(9.0 + 0 + 1.0)) < 1e-15);
  CHECK(std::abs(sc::residual(z, s) - (sc::vim(z, f, s, 1.0) - log_sum_exp(f))) < 1e-14);
  PrincipalSubspace empty;
  empty.train_mean = s.train_mean;
  empty.basis = Matrix::Zero(5, 0);
  CHECK(std::abs(sc::residual(z, empty) + (z - s.train_mean).norm()) < 1e-15);
}

TEST_CASE("ReAct, ASH and DICE reduce to simpler scores") {
  const auto p = fixtures::make_problem(31, 6, 3);
  for (Eigen::Index i = 0; i < 8; ++i) {
    const Vector z = p.test.features.row(i).transpose();
    const Vector f = p.head.logits(z);
    CHECK(std::abs(sc::react(z, p.head, 1e300) - sc::msp(f)) < 1e-15);
    if (z.sum() > 0) CHECK(std::abs(sc::ash(z, p.head, 0.0) - sc::energy(f, 1.0)) < 1e-12);
    CHECK(std::abs(sc::dice(z, p.head, RowMatrix::Ones(3, 6)) - sc::energy(f, 1.0)) < 1e-12);
    CHECK(std::abs(sc::dice(z, p.head, RowMatrix::Zero(3, 6)) - log_sum_exp(p.head.bias)) < 1e-15);
    CHECK(std::abs(sc::react(z, p.head, 0.0) - sc::msp(p.head.bias)) < 1e-15);
  }
}

TEST_CASE("ASH-S pruning rule") {
  const Vector h = sc::ash_process(vec({1, 1, 1, 1}), 50);
  CHECK(h == vec({2, 2, 0, 0}));
  CHECK(h.sum() == 4.0);
  const Vector g = sc::ash_process(vec({0.5, 3, 1, 2}), 50);
  CHECK((g - vec({0, 3.9, 0, 2.6})).cwiseAbs().maxCoeff() < 1e-15);
  try {
    sc::ash_process(Vector::Zero(4), 50);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()) == "zero activation mass");
  }
}

TEST_CASE("SHE") {
  const Vector z = vec({1, -2, 0.5});
  const RowMatrix one = mat({{0.3, 0.1, 2}});
  CHECK(std::abs(sc::she(z, one, 1.0) - z.dot(one.row(0).transpose())) < 1e-15);
  const RowMatrix two = mat({{1, 0, 0}, {0, 0, 1}});
  CHECK(std::abs(sc::she(z, two, 1e6) - 1.0) < 1e-5);
}

TEST_CASE("RankFeat") {
  const Vector u = vec({1, 2, -1, 0.5});
  const Vector v = vec({0.3, -1, 2});
  const RowMatrix z = u * v.transpose();
  const auto h = head_of(mat({{1, 2, 3}, {-1, 0, 1}}), vec({0.25, -0.5}));
  const auto r = sc::rankfeat(z, h);
  for (double s : r.scores) CHECK(std::abs(s - 0.25) < 1e-12);
  CHECK(r.degenerate);
  const auto single = sc::rankfeat(mat({{1, 2, 3}}), h);
  CHECK(single.degenerate);
  CHECK(std::abs(single.scores[0] - 0.25) < 1e-12);

  std::mt19937_64 rng(10);
  const RowMatrix batch = fixtures::gaussian(rng, 10, 6);
  const auto hh = head_of(fixtures::gaussian(rng, 3, 6), Vector::Zero(3));
  const auto got = sc::rankfeat(batch, hh);
  CHECK_FALSE(got.degenerate);
  const auto want = oracle::rankfeat(batch, oracle::to_mat(hh.weights), oracle::to_vec(hh.bias));
  for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(got.scores[i] - want[i]) < 1e-6);
}

TEST_CASE("GradNorm and Relation") {
  CHECK(sc::gradnorm(vec({1, 2}), vec({0.5, 0.5, 0.5})) == 0.0);
  CHECK(std::abs(sc::gradnorm(vec({1, -2}), vec({800, 0})) - 3.0) < 1e-12);
  CHECK(sc::gradnorm(vec({1, 1}), vec({0.1, 0.3})) >= 0.0);

  const Vector z = vec({3, 4});
  CHECK(std::abs(sc::relation(z, mat({{0.6, 0.8}}), 8) - 1.0) < 1e-15);
  CHECK(sc::relation(z, mat({{-0.8, 0.6}, {0.8, -0.6}}), 8) == 0.0);
}

TEST_CASE("OpenMax limits") {
  OpenMaxModel m;
  m.alpha_top = 2;
  m.mavs = mat({{3, 0}, {0, 3}});
  m.tails.assign(2, WeibullTail{{2.0, 1.0}, true, false, 10});
  const Vector at_mav = vec({3, 0});
  // class 0 is at its MAV (CDF 0); class 1 is far away
  auto r = sc::openmax_recalibrate(at_mav, m);
  CHECK(r(1) == 3.0);
  CHECK(r(0) == doctest::Approx(0.0).epsilon(1e-12));

  m.tails.assign(2, WeibullTail{{2.0, 1e-9}, true, false, 10});
  m.alpha_top = 1;
  const Vector v = vec({5, 1});
  r = sc::openmax_recalibrate(v, m);
  CHECK(r(1) == 0.0);
  CHECK(r(0) == 5.0);
  CHECK(r(2) == 1.0);
}

TEST_CASE("every method matches its brute-force oracle, serial and parallel") {
  const auto p = fixtures::make_problem(41, 9, 4, 160, 40, 5);
  FittedStats stats;
  const FitInputs in{&p.train, &p.val, &p.head, {}};
  for (Method m : all_methods()) {
    const auto cfg = small_config(m);
    ensure_fitted(stats, cfg, in);
    const ScoreInputs si{&p.test, &p.test_aug, &p.head, &stats};
    const auto serial = compute_scores(cfg, si, Execution::kSerial).scores;
    const auto parallel = compute_scores(cfg, si, Execution::kParallel).scores;
    const auto want = oracle::method_scores(cfg, p.test, p.test_aug, p.head, stats);
    const double tol = m == Method::kRankFeat ? 1e-6 : 1e-8;
    CAPTURE(method_id(m));
    REQUIRE(serial.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      const double scale = std::max(1.0, std::abs(want[i]));
      CHECK(std::abs(serial[i] - want[i]) <= tol * scale);
      CHECK(std::abs(parallel[i] - want[i]) <= tol * scale);
      CHECK(std::isfinite(serial[i]));
    }
    CHECK(compute_scores(cfg, si).scores == parallel);
  }
}

TEST_CASE("softmax-based scores are shift invariant") {
  const auto p = fixtures::make_problem(42, 5, 4, 80, 20);
  FittedStats stats;
  ensure_fitted(stats, MethodConfig(Method::kKlMatching), FitInputs{&p.train, &p.val, &p.head, {}});
  ensure_fitted(stats, MethodConfig(Method::kTempScale), FitInputs{&p.train, &p.val, &p.head, {}});
  auto shifted = p.test;
  shifted.logits = (p.test.logits->array() + 11.5).matrix();
  for (Method m : {Method::kMsp, Method::kTempScale, Method::kGen, Method::kKlMatching, Method::kGradNorm}) {
    const auto a = compute_scores(MethodConfig(m), ScoreInputs{&p.test, nullptr, &p.head, &stats}).scores;
    const auto b = compute_scores(MethodConfig(m), ScoreInputs{&shifted, nullptr, &p.head, &stats}).scores;
    CAPTURE(method_id(m));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-10);
  }
}

TEST_CASE("missing inputs are reported") {
  const auto p = fixtures::make_problem(43, 5, 3, 40, 10);
  FittedStats empty;
  auto code = [&](Method m, const ScoreInputs& si) {
    try {
      compute_scores(MethodConfig(m), si);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInvalidArgument;
  };
  CHECK(code(Method::kMahalanobis, {&p.test, nullptr, &p.head, &empty}) == ErrorCode::kMissingArtifact);
  CHECK(code(Method::kMcDropout, {&p.test, nullptr, &p.head, &empty}) == ErrorCode::kMissingInput);
  CHECK(code(Method::kDice, {&p.test, nullptr, nullptr, &empty}) == ErrorCode::kMissingInput);

  FittedStats other;
  ensure_fitted(other, MethodConfig(Method::kVim), FitInputs{&p.train, &p.val, &p.head, {}});
  auto wide = fixtures::make_problem(44, 7, 3, 40, 10);
  CHECK(code(Method::kVim, {&wide.test, nullptr, &wide.head, &other}) == ErrorCode::kDimensionMismatch);
}

TEST_CASE("parallel kernels are deterministic") {
  const auto p = fixtures::make_problem(45, 12, 5, 200, 64);
  FittedStats stats;
  for (Method m : {Method::kRankFeat, Method::kKnn, Method::kMahalanobis}) {
    const auto cfg = small_config(m);
    ensure_fitted(stats, cfg, FitInputs{&p.train, &p.val, &p.head, {}});
    const ScoreInputs si{&p.test, &p.test_aug, &p.head, &stats};
    CHECK(compute_scores(cfg, si).scores == compute_scores(cfg, si).scores);
  }
}
