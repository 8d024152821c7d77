// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "trajdiff/masked_attention.hpp"

namespace trajdiff {

/// Tie handling for rank matching. Only stable-by-index exists: equal entries of
/// the rank source are ordered by position, which keeps the map deterministic
/// and idempotent.
struct RankMatchPolicy {
  enum class TieBreak { kStableIndex };
  TieBreak tie_break = TieBreak::kStableIndex;
};

/// Exact feature distribution matching by sort matching.
///
/// Returns a vector whose j-th entry is the k-th smallest value of `values`,
/// where k is the rank of `ranks[j]` within `ranks`. The result is a
/// rearrangement of `values` ordered like `ranks`: the monotone (optimal under
/// quadratic cost) 1D transport assignment. O(n log n).
std::vector<double> efdm_match(std::span<const double> ranks, std::span<const double> values,
                               RankMatchPolicy policy = {});

/// Row-wise efdm_match(pair.masked.row(i), pair.unmasked.row(i)).
Eigen::MatrixXd mask_normalize(const AttentionPair& pair, RankMatchPolicy policy = {});

/// In-place variant used inside attention blocks: each row of `masked` receives
/// the rank-matched values of the same row of `unmasked`.
void mask_normalize_rows(Eigen::Ref<Eigen::MatrixXd> masked,
                         const Eigen::Ref<const Eigen::MatrixXd>& unmasked,
                         RankMatchPolicy policy = {});

}  // namespace trajdiff
