// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace trajdiff {

/// Axis-aligned box in canvas pixel coordinates, half-open: [x0,x1) x [y0,y1).
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool operator==(const Box&) const = default;
};

/// One foreground box per frame over an H x W canvas.
struct BoxTrajectory {
  int canvas_h = 0;
  int canvas_w = 0;
  std::vector<Box> boxes;

  int frames() const { return static_cast<int>(boxes.size()); }
  /// Throws ConfigError unless every box satisfies 0 <= x0 < x1 <= W, 0 <= y0 < y1 <= H.
  void validate() const;
};

/// Rectangle of token cells [r0,r1) x [c0,c1) on a grid_h x grid_w token grid.
struct TokenBox {
  int r0 = 0, r1 = 0, c0 = 0, c1 = 0;
  int rows() const { return r1 - r0; }
  int cols() const { return c1 - c0; }
  bool operator==(const TokenBox&) const = default;
};

using TokenMask = std::vector<std::uint8_t>;
using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Cells whose uniform partition cell overlaps `box` with positive area.
TokenBox token_box(const Box& box, int canvas_h, int canvas_w, int grid_h, int grid_w);

/// Per-frame token masks (row-major, length grid_h*grid_w) under the any-overlap rule.
std::vector<TokenMask> rasterize_boxes(const BoxTrajectory& traj, int grid_h, int grid_w);

/// Entry (j,k) is 1 iff mv[j] == mv[k].
BinaryMatrix build_self_mask(const TokenMask& mv);
/// Entry (j,k) is 1 iff mv[j] == my[k].
BinaryMatrix build_cross_mask(const TokenMask& mv, const TokenMask& my);
/// Entry (i,j) is 1 iff frames i and j give token `token_index` the same label.
BinaryMatrix build_temporal_mask(const std::vector<TokenMask>& frame_masks, int token_index);

struct AttentionMaskSet {
  int grid_h = 0;
  int grid_w = 0;
  std::vector<TokenMask> frame_masks;        // M_v, one per frame
  TokenMask prompt_mask;                     // M_y
  std::vector<BinaryMatrix> self_masks;      // per frame, l x l
  std::vector<BinaryMatrix> cross_masks;     // per frame, l x l_y
  std::vector<BinaryMatrix> temporal_masks;  // per token, N x N

  int tokens() const { return grid_h * grid_w; }
  int frames() const { return static_cast<int>(frame_masks.size()); }
};

AttentionMaskSet build_mask_set(const BoxTrajectory& traj, int grid_h, int grid_w,
                                const TokenMask& prompt_mask);

/// True while `step_ordinal` (0 = noisiest step of the reverse loop) is a frozen step.
bool masks_active(int step_ordinal, int total_steps, int frozen_steps);

}  // namespace trajdiff
