#include <doctest.h>

#include <numeric>
#include <random>

#include "oodkit/decision.hpp"
#include "oodkit/error.hpp"

using namespace oodkit;

namespace {

std::vector<double> one_to(int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 1.0);
  return v;
}

double tpr(const std::vector<double>& s, const Threshold& t) {
  std::size_t k = 0;
  for (double v : s) k += classify(v, t) == Verdict::kId;
  return static_cast<double>(k) / static_cast<double>(s.size());
}

}  // namespace

TEST_CASE("calibration examples") {
  const auto s = one_to(20);
  const auto t = calibrate_threshold(s, 0.95, "msp");
  CHECK(t.value == 2.0);
  CHECK(t.method == "msp");
  CHECK(tpr(s, t) == 0.95);
  CHECK(calibrate_threshold(s, 1.0).value == 1.0);
  const std::vector<double> flat(7, 0.3);
  const auto f = calibrate_threshold(flat, 0.95);
  CHECK(f.value == 0.3);
  CHECK(tpr(flat, f) == 1.0);
}

TEST_CASE("calibration rejects bad input") {
  CHECK_THROWS_AS(calibrate_threshold({}, 0.95), Error);
  const auto s = one_to(3);
  CHECK_THROWS_AS(calibrate_threshold(s, 0.0), Error);
  CHECK_THROWS_AS(calibrate_threshold(s, 1.5), Error);
}

TEST_CASE("classify uses >=") {
  Threshold t;
  t.value = 0.5;
  CHECK(classify(0.5, t) == Verdict::kId);
  CHECK(classify(0.5 - 1e-12, t) == Verdict::kOod);
  const std::vector<double> s{0.1, 0.5, 0.9};
  const auto batch = classify(s, t);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(batch[i] == classify(s[i], t));
}

TEST_CASE("calibrated threshold is the largest reaching the target") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> u(0, 30);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(static_cast<std::size_t>(1 + trial % 60));
    for (double& v : s) v = u(rng) / 3.0;
    for (double target : {0.5, 0.9, 0.95, 0.99, 1.0}) {
      const auto t = calibrate_threshold(s, target);
      CHECK(tpr(s, t) >= target);
      // any larger observed score misses the target
      for (double v : s) {
        if (v <= t.value) continue;
        Threshold up = t;
        up.value = v;
        CHECK(tpr(s, up) < target);
      }
    }
  }
}

TEST_CASE("raising the threshold never turns OoD into ID") {
  Threshold lo, hi;
  lo.value = 0.2;
  hi.value = 0.7;
  for (double s = -1.0; s <= 2.0; s += 0.05) {
    if (classify(s, lo) == Verdict::kOod) CHECK(classify(s, hi) == Verdict::kOod);
  }
}

TEST_CASE("required retained count") {
  CHECK(required_retained(20, 0.95) == 19);
  CHECK(required_retained(100, 0.99) == 99);
  CHECK(required_retained(3, 0.95) == 3);
  CHECK(required_retained(1, 0.01) == 1);
}
