// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "trajdiff/errors.hpp"

namespace trajdiff {

struct VideoShape {
  int frames = 0;
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(frames) * channels * height * width;
  }
  bool operator==(const VideoShape&) const = default;
  std::string str() const;
};

/// Dense N x C x H x W tensor of doubles, row-major with width fastest.
/// Used for latents, noise predictions, gradients and decoded toy frames.
class Video {
 public:
  Video() = default;
  explicit Video(VideoShape shape, double fill = 0.0)
      : shape_(shape), data_(shape.numel(), fill) {}

  const VideoShape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.channels + c) * shape_.height + y) *
               shape_.width +
           x;
  }
  double& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  double at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  Video& operator+=(const Video& o);
  Video& operator-=(const Video& o);
  Video& operator*=(double s);
  /// this += s * o
  Video& axpy(double s, const Video& o);

  double dot(const Video& o) const;
  double norm() const { return std::sqrt(dot(*this)); }
  double mean() const;
  double variance() const;
  bool all_finite() const;

  static Video randn(VideoShape shape, std::mt19937_64& rng);

 private:
  VideoShape shape_;
  std::vector<double> data_;
};

Video operator+(Video a, const Video& b);
Video operator-(Video a, const Video& b);
Video operator*(double s, Video a);

inline void require_same_shape(const Video& a, const Video& b, const char* what) {
  if (!(a.shape() == b.shape()))
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
}

}  // namespace trajdiff
