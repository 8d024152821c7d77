// SPDX-License-Identifier: Apache-2.0

#include "trajdiff/blob_dataset.hpp"

#include <cmath>
#include <numbers>

#include "trajdiff/errors.hpp"

namespace trajdiff {

void BlobDatasetConfig::validate() const {
  if (shape.frames < 2 || shape.channels < 2 || shape.height < 1 || shape.width < 1)
    throw ConfigError("blob dataset needs >= 2 frames and >= 2 channels");
  if (min_size < 1 || max_size < min_size || max_size > shape.height || max_size > shape.width)
    throw ConfigError("blob size range does not fit the canvas");
  if (identities < 1) throw ConfigError("blob dataset needs at least one identity");
  if (subject_tokens < 1 || subject_tokens >= prompt_tokens)
    throw ConfigError("subject block must be a strict, non-empty prefix of the prompt");
}

BoxTrajectory sample_trajectory(const BlobDatasetConfig& config, std::mt19937_64& rng) {
  const VideoShape& s = config.shape;
  std::uniform_int_distribution<int> size(config.min_size, config.max_size);
  const int bw = size(rng);
  const int bh = size(rng);
  std::uniform_int_distribution<int> px(0, s.width - bw);
  std::uniform_int_distribution<int> py(0, s.height - bh);
  const double sx = px(rng), sy = py(rng), ex = px(rng), ey = py(rng);
  BoxTrajectory traj{s.height, s.width, {}};
  for (int f = 0; f < s.frames; ++f) {
    const double a = static_cast<double>(f) / (s.frames - 1);
    const double x0 = std::round(sx + a * (ex - sx));
    const double y0 = std::round(sy + a * (ey - sy));
    traj.boxes.push_back({x0, y0, x0 + bw, y0 + bh});
  }
  return traj;
}

namespace {

Video texture(const VideoShape& s, double amplitude, std::mt19937_64& rng) {
  Video field({1, s.channels, s.height, s.width});
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_int_distribution<int> freq(0, 2);
  constexpr int kWaves = 3;
  for (int c = 0; c < s.channels; ++c) {
    for (int k = 0; k < kWaves; ++k) {
      const double fx = freq(rng), fy = freq(rng) + 1.0, ph = phase(rng);
      for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x)
          field.at(0, c, y, x) += amplitude / std::sqrt(static_cast<double>(kWaves)) *
                                  std::sin(2.0 * std::numbers::pi *
                                               (fx * x / s.width + fy * y / s.height) +
                                           ph);
    }
  }
  return field;
}

}  // namespace

Video render_blob_video(const BlobDatasetConfig& config, const BoxTrajectory& traj, int identity,
                        std::mt19937_64& rng) {
  const VideoShape& s = config.shape;
  if (traj.frames() != s.frames) throw ShapeError("blob trajectory/frame mismatch");
  const Video bg = texture(s, config.texture_amplitude, rng);
  const double signature = identity % 2 == 0 ? config.signature_amplitude
                                             : -config.signature_amplitude;
  Video v(s);
  for (int f = 0; f < s.frames; ++f) {
    const TokenBox tb = token_box(traj.boxes[static_cast<std::size_t>(f)], traj.canvas_h,
                                  traj.canvas_w, s.height, s.width);
    const double cx = 0.5 * (tb.c0 + tb.c1), cy = 0.5 * (tb.r0 + tb.r1);
    const double hx = 0.5 * tb.cols(), hy = 0.5 * tb.rows();
    for (int c = 0; c < s.channels; ++c)
      for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
          double val = bg.at(0, c, y, x);
          const double dx = (x + 0.5 - cx) / hx, dy = (y + 0.5 - cy) / hy;
          const bool inside = y >= tb.r0 && y < tb.r1 && x >= tb.c0 && x < tb.c1 &&
                              dx * dx + dy * dy <= 1.3;
          if (inside) val += c == 0 ? config.blob_amplitude : (c == 1 ? signature : 0.0);
          v.at(f, c, y, x) = val;
        }
  }
  return v;
}

BlobSample make_blob_sample(const BlobDatasetConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  BlobSample s;
  s.trajectory = sample_trajectory(config, rng);
  s.identity = std::uniform_int_distribution<int>(0, config.identities - 1)(rng);
  s.video = render_blob_video(config, s.trajectory, s.identity, rng);
  return s;
}

Conditioning make_conditioning(const BlobDatasetConfig& config, int identity,
                               BoxTrajectory trajectory) {
  if (identity < 0 || identity >= config.identities)
    throw ConfigError("blob identity out of range");
  Conditioning c;
  c.prompt = Eigen::MatrixXd::Zero(config.prompt_tokens, config.prompt_dim());
  c.subject_tokens.assign(static_cast<std::size_t>(config.prompt_tokens), 0);
  for (int j = 0; j < config.prompt_tokens; ++j) {
    const double angle = std::numbers::pi * j / config.prompt_tokens;
    c.prompt(j, config.identities) = std::sin(angle);
    c.prompt(j, config.identities + 1) = std::cos(angle);
    if (j < config.subject_tokens) {
      c.prompt(j, identity) = 1.0;
      c.subject_tokens[static_cast<std::size_t>(j)] = 1;
    }
  }
  c.trajectory = std::move(trajectory);
  return c;
}

BlobDataset BlobDataset::generate(const BlobDatasetConfig& config, int count, std::uint64_t seed) {
  if (count < 1) throw ConfigError("dataset must contain at least one video");
  BlobDataset ds{config, {}};
  std::mt19937_64 seeder(seed);
  for (int i = 0; i < count; ++i) ds.samples.push_back(make_blob_sample(config, seeder()));
  return ds;
}

}  // namespace trajdiff
