// SPDX-License-Identifier: Apache-2.0

#include "trajdiff/mask_normalization.hpp"

#include <algorithm>
#include <numeric>

#include "trajdiff/errors.hpp"

namespace trajdiff {

namespace {

void match_into(std::span<const double> ranks, std::span<const double> values,
                std::span<double> out, std::vector<std::size_t>& order,
                std::vector<double>& sorted) {
  const std::size_t n = ranks.size();
  order.resize(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ranks[a] < ranks[b]; });
  sorted.assign(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k < n; ++k) out[order[k]] = sorted[k];
}

}  // namespace

std::vector<double> efdm_match(std::span<const double> ranks, std::span<const double> values,
                               RankMatchPolicy /*policy*/) {
  if (ranks.size() != values.size())
    throw ShapeError("efdm_match: rank source and value source differ in length");
  if (ranks.empty()) throw ShapeError("efdm_match: empty input");
  std::vector<double> out(ranks.size());
  std::vector<std::size_t> order;
  std::vector<double> sorted;
  match_into(ranks, values, out, order, sorted);
  return out;
}

void mask_normalize_rows(Eigen::Ref<Eigen::MatrixXd> masked,
                         const Eigen::Ref<const Eigen::MatrixXd>& unmasked,
                         RankMatchPolicy /*policy*/) {
  if (masked.rows() != unmasked.rows() || masked.cols() != unmasked.cols())
    throw ShapeError("mask_normalize: masked and unmasked outputs differ in shape");
  const auto cols = static_cast<std::size_t>(masked.cols());
  std::vector<double> rank_row(cols), value_row(cols), out(cols), sorted;
  std::vector<std::size_t> order;
  for (Eigen::Index i = 0; i < masked.rows(); ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      rank_row[j] = masked(i, static_cast<Eigen::Index>(j));
      value_row[j] = unmasked(i, static_cast<Eigen::Index>(j));
    }
    match_into(rank_row, value_row, out, order, sorted);
    for (std::size_t j = 0; j < cols; ++j) masked(i, static_cast<Eigen::Index>(j)) = out[j];
  }
}

Eigen::MatrixXd mask_normalize(const AttentionPair& pair, RankMatchPolicy policy) {
  Eigen::MatrixXd out = pair.masked;
  mask_normalize_rows(out, pair.unmasked, policy);
  return out;
}

}  // namespace trajdiff
