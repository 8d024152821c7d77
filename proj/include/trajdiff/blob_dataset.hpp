// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "trajdiff/denoiser.hpp"

namespace trajdiff {

/// Procedural videos of one bright blob moving in a straight line over a
/// static low-frequency texture. Channel 0 carries the visible intensity,
/// channel 1 a per-identity signature under the blob.
struct BlobDatasetConfig {
  VideoShape shape{8, 2, 16, 16};
  int min_size = 4;
  int max_size = 6;
  int identities = 2;
  double blob_amplitude = 1.5;
  double signature_amplitude = 1.0;
  double texture_amplitude = 0.3;
  int prompt_tokens = 4;  // first `subject_tokens` form the subject block
  int subject_tokens = 2;

  int prompt_dim() const { return identities + 2; }
  void validate() const;
};

struct BlobSample {
  Video video;
  BoxTrajectory trajectory;  // canvas equals the latent grid
  int identity = 0;
};

BoxTrajectory sample_trajectory(const BlobDatasetConfig& config, std::mt19937_64& rng);
Video render_blob_video(const BlobDatasetConfig& config, const BoxTrajectory& traj, int identity,
                        std::mt19937_64& rng);
BlobSample make_blob_sample(const BlobDatasetConfig& config, std::uint64_t seed);

/// Prompt tokens: subject tokens carry the identity one-hot, all tokens a
/// position code. `subject_tokens` of the result is M_y.
Conditioning make_conditioning(const BlobDatasetConfig& config, int identity,
                               BoxTrajectory trajectory);

struct BlobDataset {
  BlobDatasetConfig config;
  std::vector<BlobSample> samples;

  static BlobDataset generate(const BlobDatasetConfig& config, int count, std::uint64_t seed);
};

}  // namespace trajdiff
