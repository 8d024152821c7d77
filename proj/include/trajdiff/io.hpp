// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string_view>

#include <nlohmann/json.hpp>

#include "trajdiff/blob_dataset.hpp"
#include "trajdiff/tid_sampler.hpp"

namespace trajdiff {

// Trajectory files: {"canvas": {"h": H, "w": W}, "frames": N, "boxes": [[x0,y0,x1,y1], ...]}
BoxTrajectory trajectory_from_json(const nlohmann::json& j);
nlohmann::json trajectory_to_json(const BoxTrajectory& traj);
BoxTrajectory read_trajectory(const std::filesystem::path& path);
void write_trajectory(const std::filesystem::path& path, const BoxTrajectory& traj);

/// "on"/"true" or "off"/"false"; anything else is a ConfigError.
bool parse_switch(std::string_view value);

/// Keys mirror the CLI flags (gamma, inner_steps, cg, omega, frozen_steps,
/// grad_norm, seed, mask_mode, mask_norm, masks, mode). Absent keys keep `base`.
GuidanceConfig guidance_from_json(const nlohmann::json& j, GuidanceConfig base = {});
nlohmann::json guidance_to_json(const GuidanceConfig& c);

nlohmann::json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Raw little-endian float32 dump plus `<path>.json` shape manifest.
void write_raw_video(const std::filesystem::path& path, const Video& video);
Video read_raw_video(const std::filesystem::path& path);

/// One 8-bit binary PGM per frame of channel 0, `<dir>/<prefix>_NNN.pgm`,
/// linearly mapped from the video's channel-0 range.
void write_pgm_frames(const std::filesystem::path& dir, const std::string& prefix,
                      const Video& video);

/// `<dir>/manifest.json` plus one raw video per sample.
void write_dataset(const std::filesystem::path& dir, const BlobDataset& ds);
BlobDataset read_dataset(const std::filesystem::path& dir);

}  // namespace trajdiff
