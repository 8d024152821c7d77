// SPDX-License-Identifier: Apache-2.0

#include "trajdiff/tid_sampler.hpp"

#include <cmath>
#include <string>

#include "trajdiff/errors.hpp"

namespace trajdiff {

SamplerMode parse_sampler_mode(std::string_view name) {
  if (name == "plain") return SamplerMode::kPlain;
  if (name == "id") return SamplerMode::kId;
  if (name == "tid") return SamplerMode::kTid;
  throw ConfigError("unknown sampler mode '" + std::string(name) + "'");
}

std::string_view to_string(SamplerMode mode) {
  switch (mode) {
    case SamplerMode::kPlain: return "plain";
    case SamplerMode::kId: return "id";
    case SamplerMode::kTid: return "tid";
  }
  return "?";
}

GuidanceConfig GuidanceConfig::for_mode(SamplerMode mode) {
  GuidanceConfig c;
  switch (mode) {
    case SamplerMode::kPlain:
      c.inner_steps = 0;
      break;
    case SamplerMode::kId:
      c.cg = kDefaultIdScale;
      break;
    case SamplerMode::kTid:
      break;
  }
  return c;
}

void GuidanceConfig::validate(int total_steps) const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0,1)");
  if (inner_steps < 0) throw ConfigError("inner steps must be >= 0");
  if (!(cg >= 0.0) || !std::isfinite(cg)) throw ConfigError("c_g must be finite and >= 0");
  if (!(omega >= 0.0) || !std::isfinite(omega)) throw ConfigError("omega must be finite and >= 0");
  if (frozen_steps < 0 || frozen_steps > total_steps)
    throw ConfigError("frozen steps must lie in [0, " + std::to_string(total_steps) + "]");
}

Video cfg_noise(const Denoiser& denoiser, const Video& z, int t, const Conditioning& cond,
                const MaskContext* masks, double omega) {
  if (!(omega >= 0.0)) throw ConfigError("guidance scale must be >= 0");
  Video eps = denoiser.predict_noise(z, t, &cond, masks);
  if (!eps.all_finite()) throw NumericError("denoiser produced non-finite conditional noise");
  if (omega == 0.0) return eps;
  const Video uncond = denoiser.predict_noise(z, t, nullptr, nullptr);
  if (!uncond.all_finite()) throw NumericError("denoiser produced non-finite unconditional noise");
  eps *= 1.0 + omega;
  eps.axpy(-omega, uncond);
  return eps;
}

Video tweedie_estimate(const Video& z, const Video& eps_hat, double alpha_bar) {
  if (!(alpha_bar > 0.0)) throw NumericError("tweedie: alpha_bar must be positive");
  Video out = z;
  out.axpy(-std::sqrt(1.0 - alpha_bar), eps_hat);
  out *= 1.0 / std::sqrt(alpha_bar);
  return out;
}

Video tweedie_estimate(const Video& z, int t, const Video& eps_hat, const NoiseSchedule& schedule) {
  return tweedie_estimate(z, eps_hat, schedule.alpha_bar(t));
}

Video score_from_noise(const Video& eps_hat, double alpha_bar) {
  if (!(alpha_bar < 1.0)) throw NumericError("score: undefined at alpha_bar = 1");
  Video out = eps_hat;
  out *= -1.0 / std::sqrt(1.0 - alpha_bar);
  return out;
}

Video score_from_noise(const Video& eps_hat, int t, const NoiseSchedule& schedule) {
  return score_from_noise(eps_hat, schedule.alpha_bar(t));
}

namespace {

// Gradient of tau(z0_hat(z)) with respect to z.
Video prior_gradient(const Video& z, int t, const Video& eps_hat, const Conditioning& cond,
                     const GuidanceConfig& config, const Denoiser& denoiser,
                     const NoiseSchedule& schedule, TauResult* tau_out) {
  const double abar = schedule.alpha_bar(t);
  const Video z0 = tweedie_estimate(z, eps_hat, abar);
  TauResult tr = tau_with_gradient(cond.trajectory, z0, TauOptions{.strict = false});
  Video grad = tr.gradient;
  if (config.exact_vjp) {
    auto vc = denoiser.noise_vjp(z, t, &cond, tr.gradient);
    if (vc) {
      Video jt = std::move(*vc);
      if (config.omega != 0.0) {
        auto vu = denoiser.noise_vjp(z, t, nullptr, tr.gradient);
        if (!vu) throw ConfigError("denoiser supplies conditional but not unconditional VJP");
        jt *= 1.0 + config.omega;
        jt.axpy(-config.omega, *vu);
      }
      grad.axpy(-std::sqrt(1.0 - abar), jt);
    }
  }
  grad *= 1.0 / std::sqrt(abar);
  if (tau_out) *tau_out = std::move(tr);
  return grad;
}

}  // namespace

Video tid_inner_step(const Video& z, int t, const Conditioning& cond, const MaskContext* masks,
                     const GuidanceConfig& config, const Denoiser& denoiser,
                     const NoiseSchedule& schedule, std::mt19937_64& rng,
                     const InnerStepOptions& opts) {
  const TidCoefficients coef = tid_coefficients(schedule, t, config.gamma);
  const Video eps_hat = cfg_noise(denoiser, z, t, cond, masks, config.omega);

  Video drift = score_from_noise(eps_hat, t, schedule);
  if (config.cg > 0.0) {
    Video guide = prior_gradient(z, t, eps_hat, cond, config, denoiser, schedule, opts.tau_out);
    if (config.grad_norm) {
      const double n = guide.norm();
      if (n > 0.0) guide *= 1.0 / n;
    }
    drift.axpy(config.cg, guide);
  }

  Video out = z;
  out.axpy(coef.eta_l, drift);
  if (opts.inject_noise) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += coef.eta_k * normal(rng);
  }
  if (!out.all_finite()) throw NumericError("inner step produced non-finite latent");
  return out;
}

Video ddim_step(const Video& z, int t, const Conditioning& cond, const MaskContext* masks,
                const Denoiser& denoiser, const NoiseSchedule& schedule, double omega) {
  const Video eps_hat = cfg_noise(denoiser, z, t, cond, masks, omega);
  const double prev = schedule.alpha_bar_prev(t);
  Video out = tweedie_estimate(z, t, eps_hat, schedule);
  out *= std::sqrt(prev);
  out.axpy(std::sqrt(1.0 - prev), eps_hat);
  if (!out.all_finite()) throw NumericError("DDIM step produced non-finite latent");
  return out;
}

namespace {

[[noreturn]] void rethrow_with_context(const std::string& ctx) {
  try {
    throw;
  } catch (const NumericError& e) {
    throw NumericError(ctx + ": " + e.what());
  } catch (const DegenerateError& e) {
    throw DegenerateError(ctx + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(ctx + ": " + e.what());
  } catch (const IndexError& e) {
    throw IndexError(ctx + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(ctx + ": " + e.what());
  }
}

}  // namespace

Video generate(const Denoiser& denoiser, const Conditioning& cond, const GuidanceConfig& config,
               const NoiseSchedule& schedule, VideoShape shape, const StepObserver& observer) {
  const int steps = schedule.steps();
  config.validate(steps);
  if (cond.trajectory.frames() != shape.frames)
    throw ShapeError("trajectory frame count does not match latent shape");

  AttentionMaskSet mask_set;
  MaskContext mask_ctx{&mask_set, config.mask_mode, config.mask_norm};
  if (config.use_masks && config.frozen_steps > 0) {
    const auto [gh, gw] = denoiser.attention_grid(shape);
    mask_set = build_mask_set(cond.trajectory, gh, gw, cond.subject_tokens);
  }

  std::mt19937_64 rng(config.seed);
  Video z = Video::randn(shape, rng);
  for (int ordinal = 0; ordinal < steps; ++ordinal) {
    const int t = steps - 1 - ordinal;
    const bool active = config.use_masks && masks_active(ordinal, steps, config.frozen_steps);
    const MaskContext* ctx = active ? &mask_ctx : nullptr;
    for (int m = 0; m < config.inner_steps; ++m) {
      try {
        z = tid_inner_step(z, t, cond, ctx, config, denoiser, schedule, rng);
      } catch (const Error&) {
        rethrow_with_context("step " + std::to_string(ordinal) + " (t=" + std::to_string(t) +
                             "), inner step " + std::to_string(m + 1));
      }
    }
    if (observer) observer(StepInfo{ordinal, t, active, &z, ctx});
    try {
      z = ddim_step(z, t, cond, ctx, denoiser, schedule, config.omega);
    } catch (const Error&) {
      rethrow_with_context("step " + std::to_string(ordinal) + " (t=" + std::to_string(t) + ")");
    }
  }
  return z;
}

}  // namespace trajdiff
