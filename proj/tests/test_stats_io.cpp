#include <doctest.h>

#include "fixtures.hpp"
#include "oodkit/fit.hpp"
#include "oodkit/scores.hpp"
#include "oodkit/stats_io.hpp"

using namespace oodkit;

namespace {

FittedStats fit_everything(const fixtures::Problem& p) {
  FittedStats stats;
  const FitInputs in{&p.train, &p.val, &p.head, {}};
  for (Method m : all_methods()) {
    MethodConfig cfg(m);
    if (m == Method::kKnn) cfg.set("K", 5);
    if (m == Method::kOpenMax) cfg.set("eta", 4);
    ensure_fitted(stats, cfg, in);
  }
  stats.thresholds["msp"] = Threshold{0.75, 0.95, PositiveClass::kId, "msp"};
  return stats;
}

}  // namespace

TEST_CASE("stats round-trip reproduces scores bit for bit") {
  const auto p = fixtures::make_problem(11, 8, 3, 96, 24);
  const auto stats = fit_everything(p);
  const auto dir = fixtures::temp_dir("stats_roundtrip");
  save_stats(stats, dir / "s.oods");
  const auto back = load_stats(dir / "s.oods", 8);

  CHECK(back.feature_dim == 8);
  CHECK(back.num_classes == 3);
  CHECK(*back.shared_cov_inv == *stats.shared_cov_inv);
  CHECK(back.subspace->basis == stats.subspace->basis);
  CHECK(*back.vim_alpha == *stats.vim_alpha);
  CHECK(back.dice->mask == stats.dice->mask);
  CHECK(back.openmax->tails.size() == stats.openmax->tails.size());
  CHECK(back.thresholds.at("msp").value == 0.75);
  CHECK(encode_stats(back) == encode_stats(stats));

  for (Method m : all_methods()) {
    MethodConfig cfg(m);
    if (m == Method::kKnn) cfg.set("K", 5);
    if (m == Method::kOpenMax) cfg.set("eta", 4);
    const ScoreInputs a{&p.test, &p.test_aug, &p.head, &stats};
    const ScoreInputs b{&p.test, &p.test_aug, &p.head, &back};
    CAPTURE(method_id(m));
    CHECK(compute_scores(cfg, a).scores == compute_scores(cfg, b).scores);
  }
}

TEST_CASE("loading against another feature dimension fails") {
  const auto p = fixtures::make_problem(2, 8, 3, 48, 8);
  FittedStats stats;
  ensure_fitted(stats, MethodConfig(Method::kMahalanobis), FitInputs{&p.train, &p.val, &p.head, {}});
  const auto dir = fixtures::temp_dir("stats_dim");
  save_stats(stats, dir / "s.oods");
  try {
    load_stats(dir / "s.oods", 16);
    FAIL("accepted d = 16");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDimensionMismatch);
    CHECK(std::string(e.what()).find("dimension mismatch") != std::string::npos);
  }
}

TEST_CASE("truncated, trailing and foreign bundles are rejected") {
  const auto p = fixtures::make_problem(5, 6, 3, 48, 8);
  FittedStats stats;
  ensure_fitted(stats, MethodConfig(Method::kVim), FitInputs{&p.train, &p.val, &p.head, {}});
  const auto good = encode_stats(stats);
  CHECK_NOTHROW(decode_stats(good));

  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, good.size() / 2, good.size() - 1}) {
    auto bad = good;
    bad.resize(cut);
    try {
      decode_stats(bad);
      FAIL("accepted truncated bundle");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kTruncatedPayload);
    }
  }

  auto trailing = good;
  trailing.push_back(1);
  CHECK_THROWS_AS(decode_stats(trailing), Error);

  auto magic = good;
  magic[1] = 'X';
  try {
    decode_stats(magic);
    FAIL("accepted bad magic");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kBadMagic);
  }

  auto version = good;
  version[4] = 7;
  try {
    decode_stats(version);
    FAIL("accepted version 7");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnsupportedVersion);
  }
}

TEST_CASE("empty stats bundle round-trips") {
  FittedStats s;
  s.feature_dim = 4;
  const auto back = decode_stats(encode_stats(s));
  CHECK(back.feature_dim == 4);
  CHECK_FALSE(back.class_means.has_value());
}
