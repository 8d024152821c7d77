// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "trajdiff/blob_dataset.hpp"
#include "trajdiff/tensor.hpp"
#include "trajdiff/tid_sampler.hpp"
#include "trajdiff/trajectory_masks.hpp"

namespace trajdiff {

/// Row-major intensity field, rows = height.
using Field = Eigen::MatrixXd;

/// Channel 0 of each frame, which the toy data uses as visible intensity.
std::vector<Field> decode_frames(const Video& video);

/// mean + 2 * stddev of the field.
double default_threshold(const Field& frame);

/// Bounding box (in pixel units) of the largest 4-connected component of pixels
/// strictly above `threshold`. Ties go to the component found first in raster order.
std::optional<Box> detect_blob(const Field& frame, double threshold);

double iou(const Box& a, const Box& b);

struct EvalReport {
  bool coverage_hit = false;
  std::optional<double> miou;  // absent when no frame had a detection
  std::vector<std::optional<double>> frame_iou;
  std::vector<std::optional<Box>> detections;
  int detected_frames = 0;
  nlohmann::json config;  // echo of the generating configuration

  nlohmann::json to_json() const;
};

/// Per-frame detection against the trajectory (mapped to frame resolution).
/// `threshold` overrides the per-frame default.
EvalReport evaluate(const Video& video, const BoxTrajectory& traj,
                    std::optional<double> threshold = std::nullopt);

/// One named sampler configuration in an ablation sweep.
struct SweepEntry {
  std::string name;
  GuidanceConfig config;
};

/// naive masking, masknorm, masknorm+ID, masknorm+TID and the gradient-normalized variant.
std::vector<SweepEntry> default_sweep_entries(const GuidanceConfig& base);

struct SweepRow {
  std::string config;
  std::uint64_t seed = 0;
  bool coverage_hit = false;
  std::optional<double> miou;
  int detected_frames = 0;
  double tau_final = 0.0;
};

struct SweepSummary {
  std::string config;
  int videos = 0;
  double coverage = 0.0;      // fraction of videos with coverage_hit
  std::optional<double> miou; // mean per-video mIoU over covered videos
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepSummary> summaries;

  const SweepSummary& summary(const std::string& config) const;
  std::string rows_csv() const;
};

/// Generates one video per (entry, seed) for a seeded trajectory and identity
/// drawn from `data`, then evaluates each.
SweepResult run_sweep(const Denoiser& denoiser, const BlobDatasetConfig& data,
                      const NoiseSchedule& schedule, const std::vector<SweepEntry>& entries,
                      int seeds, std::uint64_t base_seed);

struct OrderingCheck {
  std::string claim;
  bool holds = false;
  std::string detail;
};

/// Directional checks: TID > ID and TID > naive masking in mIoU, TID coverage >=
/// naive coverage. Failures are reported, never thrown.
std::vector<OrderingCheck> check_ablation_ordering(const SweepResult& result);
nlohmann::json deviation_report(const std::vector<OrderingCheck>& checks);

}  // namespace trajdiff
