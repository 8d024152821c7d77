// SPDX-License-Identifier: Apache-2.0

#include "trajdiff/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "trajdiff/errors.hpp"
#include "trajdiff/temporal_prior.hpp"

namespace trajdiff {

std::vector<Field> decode_frames(const Video& video) {
  const VideoShape& s = video.shape();
  std::vector<Field> frames;
  for (int f = 0; f < s.frames; ++f) {
    Field fld(s.height, s.width);
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x) fld(y, x) = video.at(f, 0, y, x);
    frames.push_back(std::move(fld));
  }
  return frames;
}

double default_threshold(const Field& frame) {
  const double mean = frame.mean();
  const double var = (frame.array() - mean).square().mean();
  return mean + 2.0 * std::sqrt(var);
}

std::optional<Box> detect_blob(const Field& frame, double threshold) {
  const auto h = frame.rows(), w = frame.cols();
  std::vector<int> label(static_cast<std::size_t>(h * w), -1);
  std::vector<Eigen::Index> stack;
  std::optional<Box> best;
  std::size_t best_size = 0;
  int next = 0;
  for (Eigen::Index y0 = 0; y0 < h; ++y0)
    for (Eigen::Index x0 = 0; x0 < w; ++x0) {
      const auto seed = y0 * w + x0;
      if (!(frame(y0, x0) > threshold) || label[static_cast<std::size_t>(seed)] >= 0) continue;
      std::size_t size = 0;
      Eigen::Index r0 = y0, r1 = y0, c0 = x0, c1 = x0;
      stack.assign(1, seed);
      label[static_cast<std::size_t>(seed)] = next;
      while (!stack.empty()) {
        const auto p = stack.back();
        stack.pop_back();
        ++size;
        const auto y = p / w, x = p % w;
        r0 = std::min(r0, y), r1 = std::max(r1, y), c0 = std::min(c0, x), c1 = std::max(c1, x);
        const Eigen::Index ny[4] = {y - 1, y + 1, y, y}, nx[4] = {x, x, x - 1, x + 1};
        for (int k = 0; k < 4; ++k) {
          if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
          const auto q = ny[k] * w + nx[k];
          if (label[static_cast<std::size_t>(q)] >= 0 || !(frame(ny[k], nx[k]) > threshold)) continue;
          label[static_cast<std::size_t>(q)] = next;
          stack.push_back(q);
        }
      }
      ++next;
      if (size > best_size) {
        best_size = size;
        best = Box{static_cast<double>(c0), static_cast<double>(r0), static_cast<double>(c1 + 1),
                   static_cast<double>(r1 + 1)};
      }
    }
  return best;
}

double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["coverage_hit"] = coverage_hit;
  j["miou"] = miou ? nlohmann::json(*miou) : nlohmann::json(nullptr);
  j["detected_frames"] = detected_frames;
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t i = 0; i < frame_iou.size(); ++i) {
    nlohmann::json f;
    f["frame"] = i;
    f["iou"] = frame_iou[i] ? nlohmann::json(*frame_iou[i]) : nlohmann::json(nullptr);
    if (detections[i]) {
      const Box& b = *detections[i];
      f["box"] = {b.x0, b.y0, b.x1, b.y1};
    } else {
      f["box"] = nullptr;
    }
    frames.push_back(f);
  }
  j["frames"] = frames;
  j["config"] = config;
  return j;
}

EvalReport evaluate(const Video& video, const BoxTrajectory& traj, std::optional<double> threshold) {
  const VideoShape& s = video.shape();
  if (traj.frames() != s.frames) throw ShapeError("evaluate: trajectory/video frame mismatch");
  const auto truth = latent_boxes(traj, s.height, s.width);
  const auto frames = decode_frames(video);
  EvalReport rep;
  double sum = 0.0;
  for (int f = 0; f < s.frames; ++f) {
    const Field& fld = frames[static_cast<std::size_t>(f)];
    const auto det = detect_blob(fld, threshold.value_or(default_threshold(fld)));
    rep.detections.push_back(det);
    if (det) {
      const TokenBox& tb = truth[static_cast<std::size_t>(f)];
      const Box gt{static_cast<double>(tb.c0), static_cast<double>(tb.r0),
                   static_cast<double>(tb.c1), static_cast<double>(tb.r1)};
      const double v = iou(*det, gt);
      rep.frame_iou.push_back(v);
      sum += v;
      ++rep.detected_frames;
    } else {
      rep.frame_iou.push_back(std::nullopt);
    }
  }
  rep.coverage_hit = rep.detected_frames >= (s.frames + 1) / 2;
  if (rep.detected_frames > 0) rep.miou = sum / rep.detected_frames;
  return rep;
}

std::vector<SweepEntry> default_sweep_entries(const GuidanceConfig& base) {
  auto make = [&](bool norm, int inner, double cg) {
    GuidanceConfig c = base;
    c.use_masks = true;
    c.mask_norm = norm;
    c.inner_steps = inner;
    c.cg = cg;
    c.grad_norm = false;
    return c;
  };
  const int inner = base.inner_steps > 0 ? base.inner_steps : kDefaultInnerSteps;
  const double cg = base.cg > 0.0 ? base.cg : kDefaultTidScale;
  std::vector<SweepEntry> out{
      {"masked", make(false, 0, 0.0)},
      {"masknorm", make(true, 0, 0.0)},
      {"masknorm_id", make(true, inner, 0.0)},
      {"masknorm_tid", make(true, inner, cg)},
  };
  GuidanceConfig gn = make(true, inner, kGradNormScale);
  gn.grad_norm = true;
  gn.frozen_steps = kGradNormFrozenSteps;
  out.push_back({"masknorm_tid_gradnorm", gn});
  return out;
}

const SweepSummary& SweepResult::summary(const std::string& config) const {
  for (const auto& s : summaries)
    if (s.config == config) return s;
  throw ConfigError("sweep has no configuration '" + config + "'");
}

std::string SweepResult::rows_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "config,seed,coverage_hit,miou,detected_frames,tau_final\n";
  for (const auto& r : rows) {
    os << r.config << ',' << r.seed << ',' << (r.coverage_hit ? 1 : 0) << ',';
    if (r.miou) os << *r.miou;
    os << ',' << r.detected_frames << ',' << r.tau_final << '\n';
  }
  return os.str();
}

SweepResult run_sweep(const Denoiser& denoiser, const BlobDatasetConfig& data,
                      const NoiseSchedule& schedule, const std::vector<SweepEntry>& entries,
                      int seeds, std::uint64_t base_seed) {
  if (seeds < 1) throw ConfigError("sweep needs at least one seed");
  SweepResult res;
  for (const SweepEntry& entry : entries) {
    SweepSummary sum{entry.name, 0, 0.0, std::nullopt};
    double miou_total = 0.0;
    int covered = 0;
    for (int i = 0; i < seeds; ++i) {
      const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(i);
      const BlobSample target = make_blob_sample(data, seed);
      const Conditioning cond = make_conditioning(data, target.identity, target.trajectory);
      GuidanceConfig cfg = entry.config;
      cfg.seed = seed;
      const Video z0 = generate(denoiser, cond, cfg, schedule, data.shape);
      const EvalReport rep = evaluate(z0, target.trajectory);
      SweepRow row{entry.name, seed, rep.coverage_hit, rep.miou, rep.detected_frames,
                   tau_detail(target.trajectory, z0, TauOptions{.strict = false}).tau};
      res.rows.push_back(row);
      ++sum.videos;
      if (rep.coverage_hit) {
        ++covered;
        miou_total += rep.miou.value_or(0.0);
      }
    }
    sum.coverage = static_cast<double>(covered) / sum.videos;
    if (covered > 0) sum.miou = miou_total / covered;
    res.summaries.push_back(sum);
  }
  return res;
}

std::vector<OrderingCheck> check_ablation_ordering(const SweepResult& result) {
  std::vector<OrderingCheck> out;
  auto miou_of = [&](const std::string& name) { return result.summary(name).miou.value_or(0.0); };
  auto fmt = [](double a, double b) {
    std::ostringstream os;
    os << a << " vs " << b;
    return os.str();
  };
  const double tid = miou_of("masknorm_tid"), id = miou_of("masknorm_id"), naive = miou_of("masked");
  out.push_back({"mIoU(masknorm+TID) > mIoU(masknorm+ID)", tid > id, fmt(tid, id)});
  out.push_back({"mIoU(masknorm+TID) > mIoU(naive masking)", tid > naive, fmt(tid, naive)});
  const double ct = result.summary("masknorm_tid").coverage, cn = result.summary("masked").coverage;
  out.push_back({"coverage(masknorm+TID) >= coverage(naive masking)", ct >= cn, fmt(ct, cn)});
  return out;
}

nlohmann::json deviation_report(const std::vector<OrderingCheck>& checks) {
  nlohmann::json all = nlohmann::json::array(), deviations = nlohmann::json::array();
  for (const auto& c : checks) {
    const nlohmann::json row{{"claim", c.claim}, {"observed", c.detail}, {"holds", c.holds}};
    all.push_back(row);
    if (!c.holds) deviations.push_back(row);
  }
  return {{"all_hold", deviations.empty()}, {"checks", all}, {"deviations", deviations}};
}

}  // namespace trajdiff
