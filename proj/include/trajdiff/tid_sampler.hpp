// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string_view>

#include "trajdiff/denoiser.hpp"
#include "trajdiff/schedules.hpp"
#include "trajdiff/temporal_prior.hpp"

namespace trajdiff {

enum class SamplerMode { kPlain, kId, kTid };

SamplerMode parse_sampler_mode(std::string_view name);
std::string_view to_string(SamplerMode mode);

inline constexpr double kDefaultGamma = 0.05;
inline constexpr int kDefaultInnerSteps = 2;
inline constexpr double kDefaultTidScale = 10000.0;
inline constexpr double kDefaultIdScale = 0.0;
inline constexpr double kDefaultOmega = 9.0;
inline constexpr int kDefaultFrozenSteps = 4;
inline constexpr double kGradNormScale = 0.2;
inline constexpr int kGradNormFrozenSteps = 8;

struct GuidanceConfig {
  double gamma = kDefaultGamma;          // inner-step rate, 0 < gamma < 1
  int inner_steps = kDefaultInnerSteps;  // M
  double cg = kDefaultTidScale;          // temporal-prior guidance scale
  double omega = kDefaultOmega;          // classifier-free guidance scale
  int frozen_steps = kDefaultFrozenSteps;
  bool grad_norm = false;  // unit-L2 normalize the prior gradient before scaling
  std::uint64_t seed = 0;

  bool use_masks = true;
  bool mask_norm = true;
  MaskMode mask_mode = MaskMode::kAdditive;
  /// Differentiate the prior through the denoiser when it supplies noise_vjp.
  bool exact_vjp = false;

  /// plain: M = 0; id: M = 2, c_g = 0; tid: M = 2, c_g = 10000.
  static GuidanceConfig for_mode(SamplerMode mode);
  void validate(int total_steps) const;
};

/// (1 + omega) * eps(z | cond, masks) - omega * eps(z). Masks reach only the
/// conditional call.
Video cfg_noise(const Denoiser& denoiser, const Video& z, int t, const Conditioning& cond,
                const MaskContext* masks, double omega);

/// One-shot clean estimate (z - sqrt(1 - abar) eps) / sqrt(abar).
Video tweedie_estimate(const Video& z, int t, const Video& eps_hat, const NoiseSchedule& schedule);
Video tweedie_estimate(const Video& z, const Video& eps_hat, double alpha_bar);

/// -eps / sqrt(1 - abar).
Video score_from_noise(const Video& eps_hat, int t, const NoiseSchedule& schedule);
Video score_from_noise(const Video& eps_hat, double alpha_bar);

struct InnerStepOptions {
  bool inject_noise = true;       // false forces eps_k = 0
  TauResult* tau_out = nullptr;   // receives tau at the clean estimate when c_g > 0
};

/// One temporal intrinsic denoising update at timestep t.
Video tid_inner_step(const Video& z, int t, const Conditioning& cond, const MaskContext* masks,
                     const GuidanceConfig& config, const Denoiser& denoiser,
                     const NoiseSchedule& schedule, std::mt19937_64& rng,
                     const InnerStepOptions& opts = {});

/// Deterministic DDIM update from index t to t-1 (index -1 is clean data).
Video ddim_step(const Video& z, int t, const Conditioning& cond, const MaskContext* masks,
                const Denoiser& denoiser, const NoiseSchedule& schedule, double omega);

struct StepInfo {
  int ordinal = 0;  // 0 for the noisiest step
  int t = 0;
  bool masks_active = false;
  const Video* z = nullptr;           // latent entering the DDIM step
  const MaskContext* masks = nullptr; // null outside frozen steps
};

using StepObserver = std::function<void(const StepInfo&)>;

/// Full reverse loop: per step M inner updates, then one DDIM step.
Video generate(const Denoiser& denoiser, const Conditioning& cond, const GuidanceConfig& config,
               const NoiseSchedule& schedule, VideoShape shape,
               const StepObserver& observer = {});

}  // namespace trajdiff
