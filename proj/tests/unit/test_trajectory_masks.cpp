// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>

#include "test_util.hpp"
#include "trajdiff/errors.hpp"
#include "trajdiff/trajectory_masks.hpp"

using namespace trajdiff;

namespace {

BinaryMatrix matrix(std::initializer_list<std::initializer_list<int>> rows) {
  BinaryMatrix m(static_cast<Eigen::Index>(rows.size()),
                 static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (int v : r) m(i, j++) = static_cast<std::uint8_t>(v);
    ++i;
  }
  return m;
}

// Cell (r, c) covers [c*W/gw, (c+1)*W/gw) x [r*H/gh, (r+1)*H/gh); foreground iff
// the intersection with the box has positive area.
TokenMask overlap_oracle(const Box& b, int H, int W, int gh, int gw) {
  TokenMask m(static_cast<std::size_t>(gh * gw), 0);
  for (int r = 0; r < gh; ++r)
    for (int c = 0; c < gw; ++c) {
      const double cx0 = static_cast<double>(c) * W / gw, cx1 = static_cast<double>(c + 1) * W / gw;
      const double cy0 = static_cast<double>(r) * H / gh, cy1 = static_cast<double>(r + 1) * H / gh;
      const double ix = std::min(cx1, b.x1) - std::max(cx0, b.x0);
      const double iy = std::min(cy1, b.y1) - std::max(cy0, b.y0);
      m[static_cast<std::size_t>(r * gw + c)] = (ix > 0 && iy > 0) ? 1 : 0;
    }
  return m;
}

}  // namespace

TEST_CASE("rasterize_boxes examples") {
  SUBCASE("full canvas") {
    BoxTrajectory traj{32, 48, {{0, 0, 48, 32}}};
    const auto m = rasterize_boxes(traj, 4, 6);
    for (auto v : m[0]) CHECK(v == 1);
  }
  SUBCASE("left half on 1x2 grid") {
    BoxTrajectory traj{10, 10, {{0, 0, 5, 10}}};
    CHECK(rasterize_boxes(traj, 1, 2)[0] == TokenMask{1, 0});
  }
  SUBCASE("unit box on 8x8 grid over 64x64") {
    BoxTrajectory traj{64, 64, {{0, 0, 1, 1}}};
    const auto m = rasterize_boxes(traj, 8, 8)[0];
    CHECK(m == overlap_oracle({0, 0, 1, 1}, 64, 64, 8, 8));
    int count = 0;
    for (auto v : m) count += v;
    CHECK(count == 1);
    CHECK(m[0] == 1);
  }
}

TEST_CASE("rasterize_boxes agrees with the cell-overlap oracle") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const int H = std::uniform_int_distribution<int>(1, 40)(rng);
    const int W = std::uniform_int_distribution<int>(1, 40)(rng);
    const int gh = std::uniform_int_distribution<int>(1, 12)(rng);
    const int gw = std::uniform_int_distribution<int>(1, 12)(rng);
    std::uniform_real_distribution<double> ux(0.0, W), uy(0.0, H);
    double a = ux(rng), b = ux(rng), c = uy(rng), d = uy(rng);
    if (a == b || c == d) continue;
    const Box box{std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d)};
    BoxTrajectory traj{H, W, {box}};
    CHECK(rasterize_boxes(traj, gh, gw)[0] == overlap_oracle(box, H, W, gh, gw));
  }
}

TEST_CASE("rasterization at full resolution is the exact box raster") {
  BoxTrajectory traj{6, 7, {{2, 1, 5, 4}}};
  const auto m = rasterize_boxes(traj, 6, 7)[0];
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 7; ++x)
      CHECK(m[static_cast<std::size_t>(y * 7 + x)] == ((x >= 2 && x < 5 && y >= 1 && y < 4) ? 1 : 0));
}

TEST_CASE("self mask examples") {
  CHECK(build_self_mask({1, 0}) == matrix({{1, 0}, {0, 1}}));
  CHECK(build_self_mask({1, 1, 1}) == matrix({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}}));
  CHECK(build_self_mask({1, 0, 1}) == matrix({{1, 0, 1}, {0, 1, 0}, {1, 0, 1}}));
}

TEST_CASE("cross mask examples") {
  CHECK(build_cross_mask({1}, {1, 0}) == matrix({{1, 0}}));
  CHECK(build_cross_mask({0, 0}, {0}) == matrix({{1}, {1}}));
  CHECK(build_cross_mask({1, 0}, {0, 1, 1}) == matrix({{0, 1, 1}, {1, 0, 0}}));
}

TEST_CASE("temporal mask examples") {
  CHECK(build_temporal_mask({{1}, {1}, {1}}, 0) == matrix({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}}));
  CHECK(build_temporal_mask({{0, 1}, {1, 0}, {0, 1}}, 1) ==
        matrix({{1, 0, 1}, {0, 1, 0}, {1, 0, 1}}));
  CHECK(build_temporal_mask({{0}, {0}}, 0) == matrix({{1, 1}, {1, 1}}));
  CHECK_THROWS_AS(build_temporal_mask({{0}, {0}}, 1), IndexError);
  CHECK_THROWS_AS(build_temporal_mask({{0}, {0, 1}}, 0), ShapeError);
}

TEST_CASE("mask properties on random vectors") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = std::uniform_int_distribution<std::size_t>(1, 20)(rng);
    const auto mv = testing::random_mask(rng, n);
    TokenMask flipped(mv.size());
    for (std::size_t i = 0; i < n; ++i) flipped[i] = 1 - mv[i];
    const auto s = build_self_mask(mv);
    CHECK(s == s.transpose());
    CHECK(s == build_self_mask(flipped));
    for (Eigen::Index i = 0; i < s.rows(); ++i) CHECK(s(i, i) == 1);
    const auto my = testing::random_mask(rng, 5);
    TokenMask my_flipped(5);
    for (std::size_t i = 0; i < 5; ++i) my_flipped[i] = 1 - my[i];
    CHECK(build_cross_mask(mv, my) == build_cross_mask(flipped, my_flipped));
  }
}

TEST_CASE("mask set") {
  BoxTrajectory traj{16, 16, {{0, 0, 8, 8}, {4, 4, 12, 12}, {8, 8, 16, 16}}};
  const auto set = build_mask_set(traj, 4, 4, {1, 1, 0, 0});
  CHECK(set.frames() == 3);
  CHECK(set.tokens() == 16);
  REQUIRE(set.self_masks.size() == 3);
  REQUIRE(set.cross_masks.size() == 3);
  REQUIRE(set.temporal_masks.size() == 16);
  CHECK(set.cross_masks[0].cols() == 4);
  CHECK(set.temporal_masks[0].rows() == 3);
  // token (0,0) is foreground only in frame 0
  CHECK(set.temporal_masks[0] == matrix({{1, 0, 0}, {0, 1, 1}, {0, 1, 1}}));
}

TEST_CASE("frozen steps") {
  for (int k = 0; k < 4; ++k) CHECK(masks_active(k, 50, 4));
  for (int k = 4; k < 50; ++k) CHECK_FALSE(masks_active(k, 50, 4));
  for (int k = 0; k < 10; ++k) CHECK_FALSE(masks_active(k, 10, 0));
  for (int k = 0; k < 10; ++k) CHECK(masks_active(k, 10, 10));
  CHECK_THROWS_AS(masks_active(0, 10, 11), ConfigError);
}

TEST_CASE("trajectory validation") {
  CHECK_THROWS_AS((BoxTrajectory{8, 8, {{0, 0, 9, 4}}}.validate()), ConfigError);
  CHECK_THROWS_AS((BoxTrajectory{8, 8, {{3, 0, 3, 4}}}.validate()), ConfigError);
  CHECK_THROWS_AS((BoxTrajectory{8, 8, {}}.validate()), ConfigError);
  CHECK_NOTHROW((BoxTrajectory{8, 8, {{0, 0, 8, 8}}}.validate()));
}
