// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

namespace trajdiff {

/// Discrete noise schedule. Index 0 is the least noisy step, T-1 the noisiest.
/// Immutable after construction.
class NoiseSchedule {
 public:
  /// Builds a schedule from explicit per-step rates. Each beta must lie in (0,1).
  explicit NoiseSchedule(std::vector<double> betas);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_.at(checked(t)); }
  double alpha(int t) const { return alphas_.at(checked(t)); }
  double alpha_bar(int t) const { return alpha_bars_.at(checked(t)); }

  /// Cumulative product one step below `t`; index -1 denotes clean data (1.0).
  double alpha_bar_prev(int t) const { return t <= 0 ? 1.0 : alpha_bar(t - 1); }

  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

  /// FNV-1a digest of the beta table, stored in checkpoint manifests.
  std::uint64_t hash() const;

 private:
  int checked(int t) const;

  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end);

/// Linear schedule parameters. The defaults are the toy benchmark schedule.
struct LinearScheduleConfig {
  int steps = 50;
  double beta_start = 1e-3;
  double beta_end = 0.3;

  NoiseSchedule build() const { return make_linear_schedule(steps, beta_start, beta_end); }
};

struct TidCoefficients {
  double eta_l = 0.0;  // drift: gamma * (1 - alpha_bar)
  double eta_k = 0.0;  // noise: sqrt(gamma * (2 - gamma)) * sqrt(1 - alpha_bar)
  double gamma = 0.0;
};

TidCoefficients tid_coefficients(const NoiseSchedule& schedule, int t, double gamma);
/// Same coefficients for an explicit cumulative product, e.g. the clean endpoint 1.0.
TidCoefficients tid_coefficients(double alpha_bar, double gamma);

}  // namespace trajdiff
