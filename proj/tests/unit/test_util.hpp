// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "trajdiff/tensor.hpp"
#include "trajdiff/trajectory_masks.hpp"

namespace trajdiff::testing {

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, bool with_ties) {
  std::vector<double> v(n);
  if (with_ties) {
    std::uniform_int_distribution<int> small(-3, 3);
    for (auto& x : v) x = small(rng);
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& x : v) x = normal(rng);
  }
  return v;
}

inline TokenMask random_mask(std::mt19937_64& rng, std::size_t n) {
  std::bernoulli_distribution coin(0.5);
  TokenMask m(n);
  for (auto& x : m) x = coin(rng) ? 1 : 0;
  return m;
}

/// Exhaustive minimum of sum_j (a[j] - b[pi(j)])^2 over all permutations pi.
inline double brute_force_transport_cost(const std::vector<double>& a, const std::vector<double>& b,
                                         std::vector<double>* argmin = nullptr) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = INFINITY;
  do {
    double cost = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) cost += (a[j] - b[perm[j]]) * (a[j] - b[perm[j]]);
    if (cost < best) {
      best = cost;
      if (argmin) {
        argmin->resize(a.size());
        for (std::size_t j = 0; j < a.size(); ++j) (*argmin)[j] = b[perm[j]];
      }
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Textbook Pearson correlation, two-pass, no shortcuts.
inline double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n, my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

/// Central finite-difference gradient of f at z.
template <typename F>
Video finite_difference_gradient(F&& f, const Video& z, double step) {
  Video g(z.shape());
  Video probe = z;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = f(probe);
    probe[i] = orig - step;
    const double down = f(probe);
    probe[i] = orig;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// Direct restatement of the temporal score for a trajectory whose canvas is the
/// latent grid and whose boxes have integer corners.
inline double tau_oracle(const BoxTrajectory& traj, const Video& z) {
  const VideoShape& s = z.shape();
  double total = 0.0;
  for (int i = 0; i + 1 < s.frames; ++i) {
    const Box& a = traj.boxes[static_cast<std::size_t>(i)];
    const Box& b = traj.boxes[static_cast<std::size_t>(i + 1)];
    const int ha = static_cast<int>(a.height()), wa = static_cast<int>(a.width());
    const int hb = static_cast<int>(b.height()), wb = static_cast<int>(b.width());
    const int hm = std::min(ha, hb), wm = std::min(wa, wb);
    std::vector<double> x, y;
    for (int r = 0; r < hm; ++r)
      for (int c = 0; c < wm; ++c)
        for (int ch = 0; ch < s.channels; ++ch) {
          x.push_back(z.at(i, ch, static_cast<int>(a.y0) + r * ha / hm,
                           static_cast<int>(a.x0) + c * wa / wm));
          y.push_back(z.at(i + 1, ch, static_cast<int>(b.y0) + r * hb / hm,
                           static_cast<int>(b.x0) + c * wb / wm));
        }
    total += pearson_oracle(x, y);
  }
  return total / (s.frames - 1);
}

struct TauInstance {
  BoxTrajectory traj;
  Video z;
};

/// N in [2,4], C in [1,2], integer boxes of side 1..4 on a 6x6 latent, every pair
/// sampling at least three entries.
inline TauInstance random_tau_instance(std::mt19937_64& rng) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (;;) {
    const int n = pick(2, 4), ch = pick(1, 2);
    TauInstance inst{BoxTrajectory{6, 6, {}}, Video()};
    for (int f = 0; f < n; ++f) {
      const int h = pick(1, 4), w = pick(1, 4);
      const int y0 = pick(0, 6 - h), x0 = pick(0, 6 - w);
      inst.traj.boxes.push_back({double(x0), double(y0), double(x0 + w), double(y0 + h)});
    }
    bool ok = true;
    for (int f = 0; f + 1 < n; ++f) {
      const auto& a = inst.traj.boxes[f];
      const auto& b = inst.traj.boxes[f + 1];
      const double m = std::min(a.height(), b.height()) * std::min(a.width(), b.width()) * ch;
      if (m < 3) ok = false;
    }
    if (!ok) continue;
    inst.z = Video::randn({n, ch, 6, 6}, rng);
    return inst;
  }
}

inline double relative_error(const Video& a, const Video& b) {
  Video d = a - b;
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : d.norm() / scale;
}

}  // namespace trajdiff::testing
