// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <utility>

#include <Eigen/Core>

#include "trajdiff/masked_attention.hpp"
#include "trajdiff/tensor.hpp"
#include "trajdiff/trajectory_masks.hpp"

namespace trajdiff {

/// Synthetic stand-in for a text prompt plus the user's box trajectory.
struct Conditioning {
  Eigen::MatrixXd prompt;   // l_y x d_y prompt tokens
  TokenMask subject_tokens; // M_y: 1 marks the subject block of `prompt`
  BoxTrajectory trajectory;
};

/// Attention masking state handed to a denoiser for one call.
struct MaskContext {
  const AttentionMaskSet* masks = nullptr;
  MaskMode mode = MaskMode::kAdditive;
  bool normalize = true;  // rank-match masked outputs to unmasked ones
};

/// epsilon-prediction network. Implementations must be deterministic in their
/// inputs and safe to call concurrently.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  /// `cond == nullptr` requests the unconditional prediction.
  virtual Video predict_noise(const Video& z, int t, const Conditioning* cond,
                              const MaskContext* masks) const = 0;

  /// Token grid (rows, cols) of the attention layers for a latent of shape `s`.
  virtual std::pair<int, int> attention_grid(const VideoShape& s) const {
    return {s.height, s.width};
  }

  /// J^T v where J = d predict_noise / d z, when the model can supply it exactly.
  virtual std::optional<Video> noise_vjp(const Video& /*z*/, int /*t*/,
                                         const Conditioning* /*cond*/,
                                         const Video& /*v*/) const {
    return std::nullopt;
  }
};

}  // namespace trajdiff
