// SPDX-License-Identifier: Apache-2.0

#include "trajdiff/tensor.hpp"

#include <numeric>

namespace trajdiff {

std::string VideoShape::str() const {
  return "(" + std::to_string(frames) + "," + std::to_string(channels) + "," +
         std::to_string(height) + "," + std::to_string(width) + ")";
}

Video& Video::operator+=(const Video& o) {
  require_same_shape(*this, o, "add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Video& Video::operator-=(const Video& o) {
  require_same_shape(*this, o, "sub");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Video& Video::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Video& Video::axpy(double s, const Video& o) {
  require_same_shape(*this, o, "axpy");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
  return *this;
}

double Video::dot(const Video& o) const {
  require_same_shape(*this, o, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < data_.size(); ++i) acc += data_[i] * o.data_[i];
  return acc;
}

double Video::mean() const {
  if (data_.empty()) return 0.0;
  return std::accumulate(data_.begin(), data_.end(), 0.0) / static_cast<double>(data_.size());
}

double Video::variance() const {
  if (data_.empty()) return 0.0;
  const double m = mean();
  double acc = 0.0;
  for (double v : data_) acc += (v - m) * (v - m);
  return acc / static_cast<double>(data_.size());
}

bool Video::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Video Video::randn(VideoShape shape, std::mt19937_64& rng) {
  Video v(shape);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& x : v.data_) x = normal(rng);
  return v;
}

Video operator+(Video a, const Video& b) { return a += b; }
Video operator-(Video a, const Video& b) { return a -= b; }
Video operator*(double s, Video a) { return a *= s; }

}  // namespace trajdiff
