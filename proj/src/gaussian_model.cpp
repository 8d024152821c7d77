// SPDX-License-Identifier: Apache-2.0

#include "trajdiff/gaussian_model.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "trajdiff/errors.hpp"

namespace trajdiff {

void GaussianVideoModel::validate() const {
  if (!(r >= 0.0 && r < 1.0)) throw ConfigError("Gaussian model: r must lie in [0,1)");
  if (!(s2 > 0.0)) throw ConfigError("Gaussian model: s2 must be positive");
  if (mean.size() == 0) throw ConfigError("Gaussian model: empty mean");
}

Eigen::MatrixXd GaussianVideoModel::frame_covariance() const {
  const int n = mean.shape().frames;
  Eigen::MatrixXd k(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) k(i, j) = s2 * std::pow(r, std::abs(i - j));
  return k;
}

GaussianVideoModel GaussianVideoModel::from_trajectory(const BoxTrajectory& traj,
                                                       VideoShape shape, double amplitude,
                                                       double r, double s2) {
  if (traj.frames() != shape.frames) throw ShapeError("trajectory/shape frame mismatch");
  GaussianVideoModel m{Video(shape), r, s2};
  const auto masks = rasterize_boxes(traj, shape.height, shape.width);
  for (int f = 0; f < shape.frames; ++f)
    for (int y = 0; y < shape.height; ++y)
      for (int x = 0; x < shape.width; ++x)
        if (masks[static_cast<std::size_t>(f)][static_cast<std::size_t>(y) * shape.width + x])
          m.mean.at(f, 0, y, x) = amplitude;
  m.validate();
  return m;
}

GaussianDenoiser::GaussianDenoiser(GaussianVideoModel model, NoiseSchedule schedule)
    : model_(std::move(model)), schedule_(std::move(schedule)) {
  model_.validate();
}

Eigen::MatrixXd GaussianDenoiser::marginal_covariance(int t) const {
  const double abar = schedule_.alpha_bar(t);
  const int n = model_.mean.shape().frames;
  return abar * model_.frame_covariance() +
         (1.0 - abar) * Eigen::MatrixXd::Identity(n, n);
}

Eigen::MatrixXd GaussianDenoiser::gain(int t) const {
  const double abar = schedule_.alpha_bar(t);
  const Eigen::MatrixXd cov = marginal_covariance(t);
  // K and cov commute, so the product is symmetric.
  const Eigen::MatrixXd k = model_.frame_covariance();
  return std::sqrt(abar) * cov.llt().solve(k).transpose();
}

namespace {

// Applies an N x N frame operator to every (channel, row, col) series of `v`.
Video apply_frames(const Eigen::MatrixXd& op, const Video& v) {
  const VideoShape& s = v.shape();
  Video out(s);
  Eigen::VectorXd series(s.frames);
  for (int c = 0; c < s.channels; ++c)
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x) {
        for (int f = 0; f < s.frames; ++f) series(f) = v.at(f, c, y, x);
        const Eigen::VectorXd r = op * series;
        for (int f = 0; f < s.frames; ++f) out.at(f, c, y, x) = r(f);
      }
  return out;
}

}  // namespace

Video GaussianDenoiser::posterior_mean(const Video& z, int t) const {
  require_same_shape(z, model_.mean, "Gaussian denoiser");
  const double abar = schedule_.alpha_bar(t);
  Video centered = z;
  centered.axpy(-std::sqrt(abar), model_.mean);
  Video out = apply_frames(gain(t), centered);
  out += model_.mean;
  return out;
}

Video GaussianDenoiser::predict_noise(const Video& z, int t, const Conditioning* /*cond*/,
                                      const MaskContext* /*masks*/) const {
  const double abar = schedule_.alpha_bar(t);
  Video eps = z;
  eps.axpy(-std::sqrt(abar), posterior_mean(z, t));
  eps *= 1.0 / std::sqrt(1.0 - abar);
  return eps;
}

std::optional<Video> GaussianDenoiser::noise_vjp(const Video& z, int t,
                                                 const Conditioning* /*cond*/,
                                                 const Video& v) const {
  require_same_shape(z, v, "Gaussian VJP");
  const double abar = schedule_.alpha_bar(t);
  const int n = model_.mean.shape().frames;
  const Eigen::MatrixXd jac =
      (Eigen::MatrixXd::Identity(n, n) - std::sqrt(abar) * gain(t)) / std::sqrt(1.0 - abar);
  return apply_frames(jac.transpose(), v);
}

Video GaussianDenoiser::score(const Video& z, int t) const {
  require_same_shape(z, model_.mean, "Gaussian score");
  const double abar = schedule_.alpha_bar(t);
  Video centered = z;
  centered.axpy(-std::sqrt(abar), model_.mean);
  const Eigen::MatrixXd prec = marginal_covariance(t).inverse();
  return -1.0 * apply_frames(prec, centered);
}

double GaussianDenoiser::log_density(const Video& z, int t) const {
  require_same_shape(z, model_.mean, "Gaussian log density");
  const double abar = schedule_.alpha_bar(t);
  const Eigen::MatrixXd cov = marginal_covariance(t);
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  Video centered = z;
  centered.axpy(-std::sqrt(abar), model_.mean);
  const Video solved = apply_frames(cov.inverse(), centered);
  const VideoShape& s = z.shape();
  const double series = static_cast<double>(s.channels) * s.height * s.width;
  return -0.5 * centered.dot(solved) -
         0.5 * series * (logdet + s.frames * std::log(2.0 * std::numbers::pi));
}

Video gaussian_predict_noise(const GaussianVideoModel& model, const Video& z, int t,
                             const NoiseSchedule& schedule) {
  return GaussianDenoiser(model, schedule).predict_noise(z, t, nullptr, nullptr);
}

}  // namespace trajdiff
