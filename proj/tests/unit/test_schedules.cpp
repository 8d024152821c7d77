// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "trajdiff/errors.hpp"
#include "trajdiff/schedules.hpp"

using namespace trajdiff;

TEST_CASE("linear schedule cumulative products") {
  SUBCASE("single step") {
    const auto s = make_linear_schedule(1, 0.1, 0.1);
    REQUIRE(s.steps() == 1);
    CHECK(s.alpha_bar(0) == doctest::Approx(0.9).epsilon(1e-15));
  }
  SUBCASE("two steps: 0.9 * 0.8") {
    const auto s = make_linear_schedule(2, 0.1, 0.2);
    CHECK(s.beta(1) == doctest::Approx(0.2));
    CHECK(s.alpha_bar(0) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.alpha_bar(1) == doctest::Approx(0.72).epsilon(1e-15));
  }
  SUBCASE("thousand steps match a brute-force prefix product") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    double prev = 1.0;
    for (int t = 0; t < 1000; t += 37) {
      double oracle = 1.0;
      for (int k = 0; k <= t; ++k) oracle *= 1.0 - (1e-4 + (0.02 - 1e-4) * k / 999.0);
      CHECK(s.alpha_bar(t) == doctest::Approx(oracle).epsilon(1e-12));
    }
    for (int t = 0; t < 1000; ++t) {
      CHECK(s.alpha_bar(t) < prev);
      CHECK(s.alpha_bar(t) > 0.0);
      prev = s.alpha_bar(t);
    }
    CHECK(s.alpha_bar(999) < 1e-4);
  }
}

TEST_CASE("schedule rejects invalid ranges") {
  CHECK_THROWS_AS(make_linear_schedule(0, 0.1, 0.2), ConfigError);
  CHECK_THROWS_AS(make_linear_schedule(10, 0.0, 0.2), ConfigError);
  CHECK_THROWS_AS(make_linear_schedule(10, 0.3, 0.2), ConfigError);
  CHECK_THROWS_AS(make_linear_schedule(10, 0.1, 1.0), ConfigError);
  CHECK_THROWS_AS(NoiseSchedule({0.1, 1.5}), ConfigError);
}

TEST_CASE("tid coefficients") {
  SUBCASE("clean endpoint gives zero coefficients") {
    const auto c = tid_coefficients(1.0, 0.05);
    CHECK(c.eta_l == 0.0);
    CHECK(c.eta_k == 0.0);
  }
  SUBCASE("alpha_bar = 0.5") {
    const auto c = tid_coefficients(0.5, 0.05);
    CHECK(c.eta_l == doctest::Approx(0.025).epsilon(1e-14));
    CHECK(c.eta_k == doctest::Approx(std::sqrt(0.04875)).epsilon(1e-14));
    CHECK(c.eta_k == doctest::Approx(0.220794).epsilon(1e-6));
  }
  SUBCASE("eta_k^2 identity holds at every step") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    for (int t = 0; t < s.steps(); ++t) {
      const auto c = tid_coefficients(s, t, 0.05);
      CHECK(std::abs(c.eta_k * c.eta_k - 0.05 * 1.95 * (1.0 - s.alpha_bar(t))) < 1e-12);
    }
  }
  SUBCASE("errors") {
    const auto s = make_linear_schedule(10, 0.01, 0.1);
    CHECK_THROWS_AS(tid_coefficients(s, 10, 0.05), IndexError);
    CHECK_THROWS_AS(tid_coefficients(s, -1, 0.05), IndexError);
    CHECK_THROWS_AS(tid_coefficients(s, 0, 0.0), ConfigError);
    CHECK_THROWS_AS(tid_coefficients(s, 0, 1.0), ConfigError);
  }
}

TEST_CASE("inner update with the exact score preserves variance (Monte Carlo)") {
  const auto s = make_linear_schedule(50, 0.002, 0.4);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr int kSamples = 200000;
  for (int t : {0, 10, 25, 49}) {
    const double v = 1.0 - s.alpha_bar(t);
    const auto c = tid_coefficients(s, t, 0.05);
    double acc = 0.0;
    for (int i = 0; i < kSamples; ++i) {
      const double z = std::sqrt(v) * normal(rng);
      const double next = z + c.eta_l * (-z / v) + c.eta_k * normal(rng);
      acc += next * next;
    }
    CHECK(std::abs(acc / kSamples / v - 1.0) < 0.02);
  }
}

TEST_CASE("schedule hash distinguishes tables") {
  CHECK(make_linear_schedule(50, 0.002, 0.4).hash() == make_linear_schedule(50, 0.002, 0.4).hash());
  CHECK(make_linear_schedule(50, 0.002, 0.4).hash() != make_linear_schedule(50, 0.002, 0.3).hash());
}
