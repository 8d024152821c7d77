// SPDX-License-Identifier: Apache-2.0

#include "trajdiff/schedules.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "trajdiff/errors.hpp"

namespace trajdiff {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  if (betas_.empty()) throw ConfigError("noise schedule needs at least one step");
  alphas_.reserve(betas_.size());
  alpha_bars_.reserve(betas_.size());
  double running = 1.0;
  for (double b : betas_) {
    if (!(b > 0.0 && b < 1.0))
      throw ConfigError("beta must lie in (0,1), got " + std::to_string(b));
    alphas_.push_back(1.0 - b);
    running *= 1.0 - b;
    alpha_bars_.push_back(running);
  }
}

int NoiseSchedule::checked(int t) const {
  if (t < 0 || t >= steps())
    throw IndexError("timestep " + std::to_string(t) + " outside [0, " +
                     std::to_string(steps()) + ")");
  return t;
}

std::uint64_t NoiseSchedule::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (double b : betas_) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &b, sizeof(double));
    for (unsigned char byte : bytes) {
      h ^= byte;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("schedule step count must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw ConfigError("need 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    betas[static_cast<std::size_t>(i)] = beta_start + frac * (beta_end - beta_start);
  }
  return NoiseSchedule(std::move(betas));
}

TidCoefficients tid_coefficients(const NoiseSchedule& schedule, int t, double gamma) {
  return tid_coefficients(schedule.alpha_bar(t), gamma);
}

TidCoefficients tid_coefficients(double alpha_bar, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0,1)");
  if (!(alpha_bar > 0.0 && alpha_bar <= 1.0)) throw ConfigError("alpha_bar must lie in (0,1]");
  const double one_minus = 1.0 - alpha_bar;
  TidCoefficients c;
  c.gamma = gamma;
  c.eta_l = gamma * one_minus;
  c.eta_k = std::sqrt(gamma * (2.0 - gamma)) * std::sqrt(one_minus);
  return c;
}

}  // namespace trajdiff
