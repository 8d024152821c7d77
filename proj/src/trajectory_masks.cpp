// SPDX-License-Identifier: Apache-2.0

#include "trajdiff/trajectory_masks.hpp"

#include <string>

#include "trajdiff/errors.hpp"

namespace trajdiff {

void BoxTrajectory::validate() const {
  if (canvas_h < 1 || canvas_w < 1) throw ConfigError("trajectory canvas must be non-empty");
  if (boxes.empty()) throw ConfigError("trajectory has no frames");
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Box& b = boxes[i];
    if (!(0.0 <= b.x0 && b.x0 < b.x1 && b.x1 <= canvas_w && 0.0 <= b.y0 && b.y0 < b.y1 &&
          b.y1 <= canvas_h))
      throw ConfigError("box of frame " + std::to_string(i) + " is outside the canvas or empty");
  }
}

namespace {

// Cell k of n spans [k*extent/n, (k+1)*extent/n). Comparisons are scaled by n so
// integer-valued boxes are handled exactly.
void overlap_range(double lo, double hi, int extent, int cells, int& first, int& last) {
  first = cells;
  last = 0;
  for (int k = 0; k < cells; ++k) {
    const double cell_lo = static_cast<double>(k) * extent;
    const double cell_hi = static_cast<double>(k + 1) * extent;
    if (cell_lo < hi * cells && cell_hi > lo * cells) {
      if (k < first) first = k;
      last = k + 1;
    }
  }
  if (first >= last) first = last = 0;
}

}  // namespace

TokenBox token_box(const Box& box, int canvas_h, int canvas_w, int grid_h, int grid_w) {
  if (grid_h < 1 || grid_w < 1) throw ConfigError("token grid must be at least 1x1");
  TokenBox tb;
  overlap_range(box.y0, box.y1, canvas_h, grid_h, tb.r0, tb.r1);
  overlap_range(box.x0, box.x1, canvas_w, grid_w, tb.c0, tb.c1);
  return tb;
}

std::vector<TokenMask> rasterize_boxes(const BoxTrajectory& traj, int grid_h, int grid_w) {
  traj.validate();
  std::vector<TokenMask> out;
  out.reserve(traj.boxes.size());
  for (const Box& b : traj.boxes) {
    const TokenBox tb = token_box(b, traj.canvas_h, traj.canvas_w, grid_h, grid_w);
    TokenMask m(static_cast<std::size_t>(grid_h) * grid_w, 0);
    for (int r = tb.r0; r < tb.r1; ++r)
      for (int c = tb.c0; c < tb.c1; ++c) m[static_cast<std::size_t>(r) * grid_w + c] = 1;
    out.push_back(std::move(m));
  }
  return out;
}

BinaryMatrix build_self_mask(const TokenMask& mv) { return build_cross_mask(mv, mv); }

BinaryMatrix build_cross_mask(const TokenMask& mv, const TokenMask& my) {
  const auto rows = static_cast<Eigen::Index>(mv.size());
  const auto cols = static_cast<Eigen::Index>(my.size());
  BinaryMatrix m(rows, cols);
  for (Eigen::Index j = 0; j < rows; ++j)
    for (Eigen::Index k = 0; k < cols; ++k)
      m(j, k) = (mv[static_cast<std::size_t>(j)] != 0) == (my[static_cast<std::size_t>(k)] != 0);
  return m;
}

BinaryMatrix build_temporal_mask(const std::vector<TokenMask>& frame_masks, int token_index) {
  TokenMask labels;
  labels.reserve(frame_masks.size());
  for (const TokenMask& m : frame_masks) {
    if (m.size() != frame_masks.front().size())
      throw ShapeError("temporal mask: frames have different token counts");
    if (token_index < 0 || static_cast<std::size_t>(token_index) >= m.size())
      throw IndexError("temporal mask: token index out of range");
    labels.push_back(m[static_cast<std::size_t>(token_index)]);
  }
  return build_self_mask(labels);
}

AttentionMaskSet build_mask_set(const BoxTrajectory& traj, int grid_h, int grid_w,
                                const TokenMask& prompt_mask) {
  AttentionMaskSet set;
  set.grid_h = grid_h;
  set.grid_w = grid_w;
  set.frame_masks = rasterize_boxes(traj, grid_h, grid_w);
  set.prompt_mask = prompt_mask;
  for (const TokenMask& mv : set.frame_masks) {
    set.self_masks.push_back(build_self_mask(mv));
    set.cross_masks.push_back(build_cross_mask(mv, prompt_mask));
  }
  for (int tok = 0; tok < set.tokens(); ++tok)
    set.temporal_masks.push_back(build_temporal_mask(set.frame_masks, tok));
  return set;
}

bool masks_active(int step_ordinal, int total_steps, int frozen_steps) {
  if (frozen_steps < 0 || frozen_steps > total_steps)
    throw ConfigError("frozen steps must lie in [0, total steps]");
  return step_ordinal >= 0 && step_ordinal < frozen_steps;
}

}  // namespace trajdiff
