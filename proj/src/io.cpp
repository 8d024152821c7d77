// SPDX-License-Identifier: Apache-2.0

#include "trajdiff/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "trajdiff/errors.hpp"

namespace trajdiff {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint32_t le32(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big)
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
  return v;
}

template <typename F>
auto json_guard(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

}  // namespace

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  return json_guard(path.string(), [&] { return json::parse(in); });
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

BoxTrajectory trajectory_from_json(const json& j) {
  return json_guard("trajectory", [&] {
    BoxTrajectory t;
    t.canvas_h = j.at("canvas").at("h").get<int>();
    t.canvas_w = j.at("canvas").at("w").get<int>();
    for (const auto& b : j.at("boxes")) {
      if (b.size() != 4) throw ConfigError("trajectory boxes need four coordinates");
      t.boxes.push_back({b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                         b[3].get<double>()});
    }
    if (j.contains("frames") && j.at("frames").get<int>() != t.frames())
      throw ConfigError("trajectory 'frames' does not match the number of boxes");
    t.validate();
    return t;
  });
}

json trajectory_to_json(const BoxTrajectory& traj) {
  json boxes = json::array();
  for (const Box& b : traj.boxes) boxes.push_back({b.x0, b.y0, b.x1, b.y1});
  return {{"canvas", {{"h", traj.canvas_h}, {"w", traj.canvas_w}}},
          {"frames", traj.frames()},
          {"boxes", boxes}};
}

BoxTrajectory read_trajectory(const fs::path& path) { return trajectory_from_json(read_json(path)); }

void write_trajectory(const fs::path& path, const BoxTrajectory& traj) {
  write_text(path, trajectory_to_json(traj).dump(2) + "\n");
}

bool parse_switch(std::string_view value) {
  if (value == "on" || value == "true") return true;
  if (value == "off" || value == "false") return false;
  throw ConfigError("expected on or off, got '" + std::string(value) + "'");
}

namespace {

bool switch_value(const json& j, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  return v.is_boolean() ? v.get<bool>() : parse_switch(v.get<std::string>());
}

}  // namespace

GuidanceConfig guidance_from_json(const json& j, GuidanceConfig base) {
  return json_guard("config", [&] {
    GuidanceConfig c = base;
    if (j.contains("mode")) {
      const GuidanceConfig m = GuidanceConfig::for_mode(parse_sampler_mode(j.at("mode").get<std::string>()));
      c.inner_steps = m.inner_steps;
      c.cg = m.cg;
    }
    c.gamma = j.value("gamma", c.gamma);
    c.inner_steps = j.value("inner_steps", c.inner_steps);
    c.cg = j.value("cg", c.cg);
    c.omega = j.value("omega", c.omega);
    c.frozen_steps = j.value("frozen_steps", c.frozen_steps);
    c.grad_norm = switch_value(j, "grad_norm", c.grad_norm);
    c.seed = j.value("seed", c.seed);
    c.use_masks = switch_value(j, "masks", c.use_masks);
    c.mask_norm = switch_value(j, "mask_norm", c.mask_norm);
    if (j.contains("mask_mode")) c.mask_mode = parse_mask_mode(j.at("mask_mode").get<std::string>());
    c.exact_vjp = switch_value(j, "exact_vjp", c.exact_vjp);
    return c;
  });
}

json guidance_to_json(const GuidanceConfig& c) {
  return {{"gamma", c.gamma},
          {"inner_steps", c.inner_steps},
          {"cg", c.cg},
          {"omega", c.omega},
          {"frozen_steps", c.frozen_steps},
          {"grad_norm", c.grad_norm},
          {"seed", c.seed},
          {"masks", c.use_masks},
          {"mask_norm", c.mask_norm ? "on" : "off"},
          {"mask_mode", std::string(to_string(c.mask_mode))},
          {"exact_vjp", c.exact_vjp}};
}

void write_raw_video(const fs::path& path, const Video& video) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (double v : video.values()) {
    const auto f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    bits = le32(bits);
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  const VideoShape& s = video.shape();
  json manifest = {{"dtype", "float32-le"},
                   {"layout", "NCHW"},
                   {"shape", {s.frames, s.channels, s.height, s.width}},
                   {"data", path.filename().string()}};
  auto mpath = path;
  mpath += ".json";
  write_text(mpath, manifest.dump(2) + "\n");
}

Video read_raw_video(const fs::path& path) {
  auto mpath = path;
  mpath += ".json";
  const json m = read_json(mpath);
  const auto shape = json_guard("video manifest", [&] { return m.at("shape").get<std::vector<int>>(); });
  if (shape.size() != 4) throw ConfigError("video manifest shape must have four entries");
  Video v({shape[0], shape[1], shape[2], shape[3]});
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  for (auto& x : v.values()) {
    std::uint32_t bits = 0;
    if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits))
      throw ConfigError("raw video is truncated: " + path.string());
    bits = le32(bits);
    float f;
    std::memcpy(&f, &bits, sizeof f);
    x = f;
  }
  return v;
}

void write_pgm_frames(const fs::path& dir, const std::string& prefix, const Video& video) {
  fs::create_directories(dir);
  const VideoShape& s = video.shape();
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (int f = 0; f < s.frames; ++f)
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x) {
        const double v = video.at(f, 0, y, x);
        lo = first ? v : std::min(lo, v);
        hi = first ? v : std::max(hi, v);
        first = false;
      }
  const double span = hi > lo ? hi - lo : 1.0;
  for (int f = 0; f < s.frames; ++f) {
    std::ostringstream name;
    name << prefix << '_' << std::setw(3) << std::setfill('0') << f << ".pgm";
    std::ofstream out(dir / name.str(), std::ios::binary);
    if (!out) throw ConfigError("cannot write " + (dir / name.str()).string());
    out << "P5\n" << s.width << ' ' << s.height << "\n255\n";
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x) {
        const double u = (video.at(f, 0, y, x) - lo) / span;
        out.put(static_cast<char>(static_cast<unsigned char>(std::clamp(u * 255.0 + 0.5, 0.0, 255.0))));
      }
  }
}

void write_dataset(const fs::path& dir, const BlobDataset& ds) {
  fs::create_directories(dir);
  const BlobDatasetConfig& c = ds.config;
  json videos = json::array();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    std::ostringstream name;
    name << "video_" << std::setw(5) << std::setfill('0') << i << ".f32";
    write_raw_video(dir / name.str(), ds.samples[i].video);
    videos.push_back({{"file", name.str()},
                      {"identity", ds.samples[i].identity},
                      {"trajectory", trajectory_to_json(ds.samples[i].trajectory)}});
  }
  json manifest = {
      {"format", "trajdiff-blob-dataset"},
      {"config",
       {{"shape", {c.shape.frames, c.shape.channels, c.shape.height, c.shape.width}},
        {"min_size", c.min_size},
        {"max_size", c.max_size},
        {"identities", c.identities},
        {"blob_amplitude", c.blob_amplitude},
        {"signature_amplitude", c.signature_amplitude},
        {"texture_amplitude", c.texture_amplitude},
        {"prompt_tokens", c.prompt_tokens},
        {"subject_tokens", c.subject_tokens}}},
      {"videos", videos}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

BlobDataset read_dataset(const fs::path& dir) {
  const json m = read_json(dir / "manifest.json");
  return json_guard("dataset manifest", [&] {
    if (m.value("format", "") != "trajdiff-blob-dataset")
      throw ConfigError("not a blob dataset: " + dir.string());
    BlobDataset ds;
    const json& c = m.at("config");
    const auto shape = c.at("shape").get<std::vector<int>>();
    if (shape.size() != 4) throw ConfigError("dataset shape must have four entries");
    ds.config.shape = {shape[0], shape[1], shape[2], shape[3]};
    ds.config.min_size = c.at("min_size").get<int>();
    ds.config.max_size = c.at("max_size").get<int>();
    ds.config.identities = c.at("identities").get<int>();
    ds.config.blob_amplitude = c.at("blob_amplitude").get<double>();
    ds.config.signature_amplitude = c.at("signature_amplitude").get<double>();
    ds.config.texture_amplitude = c.at("texture_amplitude").get<double>();
    ds.config.prompt_tokens = c.at("prompt_tokens").get<int>();
    ds.config.subject_tokens = c.at("subject_tokens").get<int>();
    ds.config.validate();
    for (const auto& v : m.at("videos")) {
      BlobSample s;
      s.video = read_raw_video(dir / v.at("file").get<std::string>());
      s.identity = v.at("identity").get<int>();
      s.trajectory = trajectory_from_json(v.at("trajectory"));
      if (!(s.video.shape() == ds.config.shape)) throw ShapeError("dataset video has wrong shape");
      ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw ConfigError("dataset has no videos");
    return ds;
  });
}

}  // namespace trajdiff
