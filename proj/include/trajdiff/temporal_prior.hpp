// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "trajdiff/tensor.hpp"
#include "trajdiff/trajectory_masks.hpp"

namespace trajdiff {

/// Deterministic stratified index grid into a crop: index k of m samples over an
/// extent of n is floor(k * n / m).
struct SamplingGrid {
  std::vector<int> rows;
  std::vector<int> cols;

  static SamplingGrid stratified(int crop_h, int crop_w, int sample_h, int sample_w);
};

/// The sub-tensor of a latent video under one frame's box (all channels).
struct ForegroundCrop {
  int frame = 0;
  TokenBox region;
};

/// Flat indices into `z` of the sampled crop entries, ordered row, column, channel.
std::vector<std::size_t> sample_indices(const Video& z, const ForegroundCrop& crop,
                                        const SamplingGrid& grid);
std::vector<double> sample_crop(const Video& z, const ForegroundCrop& crop,
                                const SamplingGrid& grid);

/// Pearson correlation. Throws DegenerateError when either input is constant.
double pearson(std::span<const double> x, std::span<const double> y);

/// Boxes of `traj` at latent resolution (any-overlap rule).
std::vector<TokenBox> latent_boxes(const BoxTrajectory& traj, int latent_h, int latent_w);

struct TauOptions {
  /// Strict: a constant crop raises DegenerateError naming the pair. Lenient:
  /// that pair contributes correlation 0 and zero gradient, with a warning.
  bool strict = true;
};

struct TauResult {
  double tau = 0.0;
  std::vector<double> pair_rho;       // one per consecutive frame pair
  std::vector<bool> pair_degenerate;  // lenient mode only
  Video gradient;                     // filled by tau_with_gradient
};

/// Mean Pearson correlation of stratified foreground samples over consecutive frames.
double tau(const BoxTrajectory& traj, const Video& z, TauOptions opts = {});
TauResult tau_detail(const BoxTrajectory& traj, const Video& z, TauOptions opts = {});
/// Analytic gradient of tau with respect to every entry of z.
Video tau_gradient(const BoxTrajectory& traj, const Video& z, TauOptions opts = {});
TauResult tau_with_gradient(const BoxTrajectory& traj, const Video& z, TauOptions opts = {});

}  // namespace trajdiff
