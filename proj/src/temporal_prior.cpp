// SPDX-License-Identifier: Apache-2.0

#include "trajdiff/temporal_prior.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "trajdiff/errors.hpp"
#include "trajdiff/logging.hpp"

namespace trajdiff {

SamplingGrid SamplingGrid::stratified(int crop_h, int crop_w, int sample_h, int sample_w) {
  if (sample_h < 1 || sample_w < 1 || sample_h > crop_h || sample_w > crop_w)
    throw IndexError("sampling grid larger than crop or empty");
  SamplingGrid g;
  for (int k = 0; k < sample_h; ++k) g.rows.push_back(k * crop_h / sample_h);
  for (int k = 0; k < sample_w; ++k) g.cols.push_back(k * crop_w / sample_w);
  return g;
}

std::vector<std::size_t> sample_indices(const Video& z, const ForegroundCrop& crop,
                                        const SamplingGrid& grid) {
  const VideoShape& s = z.shape();
  const TokenBox& b = crop.region;
  if (crop.frame < 0 || crop.frame >= s.frames) throw IndexError("crop frame out of range");
  if (b.r0 < 0 || b.c0 < 0 || b.r1 > s.height || b.c1 > s.width || b.rows() < 1 || b.cols() < 1)
    throw IndexError("crop region outside the latent");
  std::vector<std::size_t> idx;
  idx.reserve(grid.rows.size() * grid.cols.size() * static_cast<std::size_t>(s.channels));
  for (int r : grid.rows) {
    if (r < 0 || r >= b.rows()) throw IndexError("sampling row outside crop");
    for (int c : grid.cols) {
      if (c < 0 || c >= b.cols()) throw IndexError("sampling column outside crop");
      for (int ch = 0; ch < s.channels; ++ch)
        idx.push_back(z.index(crop.frame, ch, b.r0 + r, b.c0 + c));
    }
  }
  return idx;
}

std::vector<double> sample_crop(const Video& z, const ForegroundCrop& crop,
                                const SamplingGrid& grid) {
  const auto idx = sample_indices(z, crop, grid);
  std::vector<double> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = z[idx[i]];
  return out;
}

namespace {

struct Centered {
  std::vector<double> dev;
  double ss = 0.0;
};

Centered center(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  Centered c;
  c.dev.resize(x.size());
  double peak = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    c.dev[i] = x[i] - m;
    c.ss += c.dev[i] * c.dev[i];
    peak = std::max(peak, std::abs(x[i]));
  }
  // Constant inputs leave rounding residue from the mean; treat that as zero spread.
  const double floor = 1e-14 * std::max(peak, 1e-300);
  if (c.ss <= static_cast<double>(x.size()) * floor * floor) c.ss = 0.0;
  return c;
}

struct PairTerm {
  double rho = 0.0;
  std::vector<double> dx, dy;  // d rho / d x, d rho / d y
};

PairTerm pearson_term(std::span<const double> x, std::span<const double> y, bool want_grad) {
  if (x.size() != y.size()) throw ShapeError("pearson: length mismatch");
  if (x.size() < 2) throw DegenerateError("pearson: need at least two samples");
  const Centered cx = center(x);
  const Centered cy = center(y);
  if (cx.ss == 0.0 || cy.ss == 0.0) throw DegenerateError("pearson: constant input");
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sxy += cx.dev[i] * cy.dev[i];
  const double denom = std::sqrt(cx.ss * cy.ss);
  PairTerm t;
  t.rho = std::clamp(sxy / denom, -1.0, 1.0);
  if (want_grad) {
    const double r = sxy / denom;
    t.dx.resize(x.size());
    t.dy.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      t.dx[i] = cy.dev[i] / denom - r * cx.dev[i] / cx.ss;
      t.dy[i] = cx.dev[i] / denom - r * cy.dev[i] / cy.ss;
    }
  }
  return t;
}

TauResult evaluate(const BoxTrajectory& traj, const Video& z, TauOptions opts, bool want_grad) {
  const VideoShape& s = z.shape();
  if (traj.frames() != s.frames)
    throw ShapeError("tau: trajectory has " + std::to_string(traj.frames()) +
                     " frames but latent has " + std::to_string(s.frames));
  if (s.frames < 2) throw ShapeError("tau: need at least two frames");
  const auto boxes = latent_boxes(traj, s.height, s.width);

  TauResult res;
  if (want_grad) res.gradient = Video(s);
  const int pairs = s.frames - 1;
  double total = 0.0;
  for (int i = 0; i < pairs; ++i) {
    const TokenBox& a = boxes[static_cast<std::size_t>(i)];
    const TokenBox& b = boxes[static_cast<std::size_t>(i + 1)];
    if (a.rows() < 1 || a.cols() < 1 || b.rows() < 1 || b.cols() < 1)
      throw DegenerateError("tau: empty latent box in pair " + std::to_string(i));
    const int hmin = std::min(a.rows(), b.rows());
    const int wmin = std::min(a.cols(), b.cols());
    const auto ia = sample_indices(z, {i, a}, SamplingGrid::stratified(a.rows(), a.cols(), hmin, wmin));
    const auto ib =
        sample_indices(z, {i + 1, b}, SamplingGrid::stratified(b.rows(), b.cols(), hmin, wmin));
    std::vector<double> xa(ia.size()), xb(ib.size());
    for (std::size_t k = 0; k < ia.size(); ++k) xa[k] = z[ia[k]];
    for (std::size_t k = 0; k < ib.size(); ++k) xb[k] = z[ib[k]];

    PairTerm term;
    bool degenerate = false;
    try {
      term = pearson_term(xa, xb, want_grad);
    } catch (const DegenerateError&) {
      if (opts.strict)
        throw DegenerateError("tau: constant crop in frame pair " + std::to_string(i) + "-" +
                              std::to_string(i + 1));
      log_warn("tau: constant crop in frame pair " + std::to_string(i) +
               ", using zero correlation");
      degenerate = true;
    }
    res.pair_rho.push_back(term.rho);
    res.pair_degenerate.push_back(degenerate);
    total += term.rho;
    if (want_grad && !degenerate) {
      for (std::size_t k = 0; k < ia.size(); ++k) res.gradient[ia[k]] += term.dx[k] / pairs;
      for (std::size_t k = 0; k < ib.size(); ++k) res.gradient[ib[k]] += term.dy[k] / pairs;
    }
  }
  res.tau = total / pairs;
  return res;
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
  return pearson_term(x, y, false).rho;
}

std::vector<TokenBox> latent_boxes(const BoxTrajectory& traj, int latent_h, int latent_w) {
  traj.validate();
  std::vector<TokenBox> out;
  out.reserve(traj.boxes.size());
  for (const Box& b : traj.boxes)
    out.push_back(token_box(b, traj.canvas_h, traj.canvas_w, latent_h, latent_w));
  return out;
}

double tau(const BoxTrajectory& traj, const Video& z, TauOptions opts) {
  return evaluate(traj, z, opts, false).tau;
}

TauResult tau_detail(const BoxTrajectory& traj, const Video& z, TauOptions opts) {
  return evaluate(traj, z, opts, false);
}

Video tau_gradient(const BoxTrajectory& traj, const Video& z, TauOptions opts) {
  return evaluate(traj, z, opts, true).gradient;
}

TauResult tau_with_gradient(const BoxTrajectory& traj, const Video& z, TauOptions opts) {
  return evaluate(traj, z, opts, true);
}

}  // namespace trajdiff
