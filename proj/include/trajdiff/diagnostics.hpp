// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "trajdiff/tid_sampler.hpp"
#include "trajdiff/toy_denoiser.hpp"

namespace trajdiff {

/// Per-step variance of one layer's activations across a generation.
struct VarianceTrace {
  std::string config;  // baseline, masked, masknorm, masknorm_tid
  std::vector<double> variance;
};

struct VarianceError {
  std::vector<double> per_step;      // (trace - baseline)^2
  std::vector<double> running_mean;  // cumulative mean of per_step
  double mean() const;
};

/// Runs the same seed under baseline (no masks), naive masking, masking with
/// mask normalization, and mask normalization with TID. `config` supplies the
/// seed, scales and frozen steps. The baseline trace comes first.
std::vector<VarianceTrace> run_variance_study(const ToyDenoiser& denoiser, const Conditioning& cond,
                                              const GuidanceConfig& config,
                                              const NoiseSchedule& schedule, ToyLayer layer);

/// Single trace for an explicit configuration.
VarianceTrace trace_variance(const ToyDenoiser& denoiser, const Conditioning& cond,
                             const GuidanceConfig& config, const NoiseSchedule& schedule,
                             ToyLayer layer, std::string label);

VarianceError variance_mse(const VarianceTrace& trace, const VarianceTrace& baseline);

/// Columns: step,config,variance,mse_vs_baseline,mse_running_mean.
std::string variance_csv(const std::vector<VarianceTrace>& traces);
/// gnuplot script plotting the CSV written at `csv_name`.
std::string variance_gnuplot(const std::string& csv_name, int frozen_steps);

}  // namespace trajdiff
