// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include "trajdiff/denoiser.hpp"
#include "trajdiff/schedules.hpp"

namespace trajdiff {

/// Gaussian law over latent videos: each (channel, row, col) position is an
/// independent N-frame AR(1) series with marginal variance s2, lag correlation r
/// and per-entry mean `mean`.
struct GaussianVideoModel {
  Video mean;
  double r = 0.0;   // in [0, 1)
  double s2 = 1.0;  // > 0

  void validate() const;
  /// N x N frame covariance s2 * r^|i-j|.
  Eigen::MatrixXd frame_covariance() const;
  /// Mean field holding `amplitude` inside each frame's box on channel 0.
  static GaussianVideoModel from_trajectory(const BoxTrajectory& traj, VideoShape shape,
                                            double amplitude, double r, double s2);
};

/// Bayes-optimal noise predictor for a GaussianVideoModel. Conditioning and
/// masks are ignored; the conditional and unconditional predictions coincide.
class GaussianDenoiser : public Denoiser {
 public:
  GaussianDenoiser(GaussianVideoModel model, NoiseSchedule schedule);

  Video predict_noise(const Video& z, int t, const Conditioning* cond,
                      const MaskContext* masks) const override;
  std::optional<Video> noise_vjp(const Video& z, int t, const Conditioning* cond,
                                 const Video& v) const override;

  /// E[x0 | z_t].
  Video posterior_mean(const Video& z, int t) const;
  /// Closed-form grad log p_t(z).
  Video score(const Video& z, int t) const;
  double log_density(const Video& z, int t) const;

  const GaussianVideoModel& model() const { return model_; }
  const NoiseSchedule& schedule() const { return schedule_; }

 private:
  // s2 sqrt(abar) K (abar s2 K + (1-abar) I)^{-1}
  Eigen::MatrixXd gain(int t) const;
  Eigen::MatrixXd marginal_covariance(int t) const;

  GaussianVideoModel model_;
  NoiseSchedule schedule_;
};

Video gaussian_predict_noise(const GaussianVideoModel& model, const Video& z, int t,
                             const NoiseSchedule& schedule);

}  // namespace trajdiff
