// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"
#include "trajdiff/errors.hpp"
#include "trajdiff/gaussian_model.hpp"
#include "trajdiff/tid_sampler.hpp"

using namespace trajdiff;

TEST_CASE("independent zero-mean model has the scalar posterior mean") {
  const VideoShape s{3, 2, 2, 2};
  const auto sched = make_linear_schedule(30, 0.01, 0.2);
  const double s2 = 0.7;
  GaussianDenoiser gd(GaussianVideoModel{Video(s), 0.0, s2}, sched);
  std::mt19937_64 rng(30);
  const Video z = Video::randn(s, rng);
  for (int t : {0, 9, 29}) {
    const double a = sched.alpha_bar(t);
    const Video oracle = (s2 * std::sqrt(a) / (a * s2 + 1 - a)) * z;
    CHECK(testing::relative_error(gd.posterior_mean(z, t), oracle) < 1e-13);
  }
}

TEST_CASE("noise prediction vanishes at the mean as alpha_bar approaches 1") {
  const VideoShape s{3, 1, 2, 2};
  const auto sched = make_linear_schedule(5, 1e-8, 0.1);
  std::mt19937_64 rng(31);
  GaussianVideoModel model{Video::randn(s, rng), 0.4, 1.0};
  const Video z = std::sqrt(sched.alpha_bar(0)) * model.mean;
  CHECK(gaussian_predict_noise(model, z, 0, sched).norm() < 1e-6);
}

TEST_CASE("score from predicted noise equals the closed-form log-density gradient") {
  const VideoShape s{4, 1, 3, 2};
  const auto sched = make_linear_schedule(30, 0.01, 0.2);
  std::mt19937_64 rng(32);
  GaussianDenoiser gd(GaussianVideoModel{Video::randn(s, rng), 0.7, 0.8}, sched);
  for (int t : {0, 12, 29}) {
    const Video z = Video::randn(s, rng);
    const Video score = score_from_noise(gd.predict_noise(z, t, nullptr, nullptr), t, sched);
    CHECK(testing::relative_error(score, gd.score(z, t)) < 1e-10);
    const Video fd = testing::finite_difference_gradient(
        [&](const Video& x) { return gd.log_density(x, t); }, z, 1e-5);
    Video diff = score - fd;
    CHECK(diff.norm() / std::sqrt(double(diff.size())) < 1e-6);
  }
}

TEST_CASE("noise VJP matches finite differences") {
  const VideoShape s{3, 1, 2, 2};
  const auto sched = make_linear_schedule(30, 0.01, 0.2);
  std::mt19937_64 rng(33);
  GaussianDenoiser gd(GaussianVideoModel{Video::randn(s, rng), 0.5, 1.2}, sched);
  const Video z = Video::randn(s, rng), v = Video::randn(s, rng);
  const Video fd = testing::finite_difference_gradient(
      [&](const Video& x) { return gd.predict_noise(x, 11, nullptr, nullptr).dot(v); }, z, 1e-5);
  CHECK(testing::relative_error(*gd.noise_vjp(z, 11, nullptr, v), fd) < 1e-8);
}

TEST_CASE("model construction") {
  BoxTrajectory traj{4, 4, {{0, 0, 2, 2}, {2, 2, 4, 4}}};
  const auto m = GaussianVideoModel::from_trajectory(traj, {2, 2, 4, 4}, 3.0, 0.5, 1.0);
  CHECK(m.mean.at(0, 0, 1, 1) == 3.0);
  CHECK(m.mean.at(0, 0, 2, 2) == 0.0);
  CHECK(m.mean.at(1, 0, 3, 3) == 3.0);
  CHECK(m.mean.at(1, 1, 3, 3) == 0.0);
  CHECK(m.frame_covariance()(0, 1) == doctest::Approx(0.5));
  CHECK_THROWS_AS(GaussianVideoModel::from_trajectory(traj, {2, 1, 4, 4}, 1.0, 1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(GaussianVideoModel::from_trajectory(traj, {2, 1, 4, 4}, 1.0, 0.5, 0.0), ConfigError);
  CHECK_THROWS_AS(GaussianVideoModel::from_trajectory(traj, {3, 1, 4, 4}, 1.0, 0.5, 1.0), ShapeError);
}

TEST_CASE("inner update with the exact score preserves the marginal variance") {
  const VideoShape s{1, 1, 100, 100};
  const auto sched = make_linear_schedule(50, 0.002, 0.4);
  GaussianDenoiser gd(GaussianVideoModel{Video(s), 0.0, 1e-6}, sched);
  const Conditioning cond{Eigen::MatrixXd::Zero(1, 1), {1}, BoxTrajectory{100, 100, {{0, 0, 100, 100}}}};
  GuidanceConfig cfg = GuidanceConfig::for_mode(SamplerMode::kId);
  std::mt19937_64 rng(34);
  for (int t : {3, 20, 45}) {
    const double v = 1.0 - sched.alpha_bar(t);
    double acc = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
      Video z = std::sqrt(v) * Video::randn(s, rng);
      for (int m = 0; m < cfg.inner_steps; ++m)
        z = tid_inner_step(z, t, cond, nullptr, cfg, gd, sched, rng);
      acc += z.dot(z);
    }
    CHECK(std::abs(acc / (5.0 * s.numel()) / v - 1.0) < 0.02);
  }
}
