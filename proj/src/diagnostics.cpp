// SPDX-License-Identifier: Apache-2.0

#include "trajdiff/diagnostics.hpp"

#include <numeric>
#include <sstream>

#include "trajdiff/errors.hpp"

namespace trajdiff {

double VarianceError::mean() const {
  if (per_step.empty()) return 0.0;
  return std::accumulate(per_step.begin(), per_step.end(), 0.0) /
         static_cast<double>(per_step.size());
}

VarianceTrace trace_variance(const ToyDenoiser& denoiser, const Conditioning& cond,
                             const GuidanceConfig& config, const NoiseSchedule& schedule,
                             ToyLayer layer, std::string label) {
  VarianceTrace trace{std::move(label), {}};
  auto observer = [&](const StepInfo& info) {
    const Video act = denoiser.collect_activations(layer, *info.z, info.t, &cond, info.masks);
    trace.variance.push_back(act.variance());
  };
  generate(denoiser, cond, config, schedule, denoiser.config().shape, observer);
  return trace;
}

std::vector<VarianceTrace> run_variance_study(const ToyDenoiser& denoiser, const Conditioning& cond,
                                              const GuidanceConfig& config,
                                              const NoiseSchedule& schedule, ToyLayer layer) {
  GuidanceConfig plain = config;
  plain.inner_steps = 0;
  plain.grad_norm = false;

  GuidanceConfig baseline = plain;
  baseline.use_masks = false;
  GuidanceConfig masked = plain;
  masked.use_masks = true;
  masked.mask_norm = false;
  GuidanceConfig masknorm = plain;
  masknorm.use_masks = true;
  masknorm.mask_norm = true;
  GuidanceConfig ours = config;
  ours.use_masks = true;
  ours.mask_norm = true;
  if (ours.inner_steps == 0) ours.inner_steps = kDefaultInnerSteps;

  return {trace_variance(denoiser, cond, baseline, schedule, layer, "baseline"),
          trace_variance(denoiser, cond, masked, schedule, layer, "masked"),
          trace_variance(denoiser, cond, masknorm, schedule, layer, "masknorm"),
          trace_variance(denoiser, cond, ours, schedule, layer, "masknorm_tid")};
}

VarianceError variance_mse(const VarianceTrace& trace, const VarianceTrace& baseline) {
  if (trace.variance.size() != baseline.variance.size())
    throw ShapeError("variance_mse: traces differ in length");
  VarianceError err;
  double acc = 0.0;
  for (std::size_t i = 0; i < trace.variance.size(); ++i) {
    const double d = trace.variance[i] - baseline.variance[i];
    err.per_step.push_back(d * d);
    acc += d * d;
    err.running_mean.push_back(acc / static_cast<double>(i + 1));
  }
  return err;
}

std::string variance_csv(const std::vector<VarianceTrace>& traces) {
  if (traces.empty()) throw ConfigError("variance_csv: no traces");
  std::ostringstream os;
  os.precision(12);
  os << "step,config,variance,mse_vs_baseline,mse_running_mean\n";
  for (const auto& tr : traces) {
    const VarianceError err = variance_mse(tr, traces.front());
    for (std::size_t i = 0; i < tr.variance.size(); ++i)
      os << i + 1 << ',' << tr.config << ',' << tr.variance[i] << ',' << err.per_step[i] << ','
         << err.running_mean[i] << '\n';
  }
  return os.str();
}

std::string variance_gnuplot(const std::string& csv_name, int frozen_steps) {
  std::ostringstream os;
  os << "# gnuplot -persist <this file>\n"
     << "set datafile separator ','\n"
     << "set key autotitle columnhead\n"
     << "set multiplot layout 1,2\n"
     << "set object 1 rect from 0.5, graph 0 to " << frozen_steps + 0.5
     << ", graph 1 fc rgb '#dddddd' behind\n"
     << "set xlabel 'diffusion step'\n";
  const char* configs[] = {"baseline", "masked", "masknorm", "masknorm_tid"};
  for (int panel = 0; panel < 2; ++panel) {
    os << "set ylabel '" << (panel == 0 ? "activation variance" : "variance MSE vs baseline")
       << "'\nplot ";
    for (int i = 0; i < 4; ++i) {
      os << (i ? ", " : "") << "'" << csv_name << "' using (strcol(2) eq '" << configs[i]
         << "' ? $1 : 1/0):" << (panel == 0 ? 3 : 4) << " with lines title '" << configs[i] << "'";
    }
    os << '\n';
  }
  os << "unset multiplot\n";
  return os.str();
}

}  // namespace trajdiff
