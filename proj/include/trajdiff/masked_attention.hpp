// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string_view>

#include <Eigen/Core>

#include "trajdiff/trajectory_masks.hpp"

namespace trajdiff {

enum class MaskMode {
  kAdditive,        // masked logits pushed to a large negative constant
  kMultiplicative,  // logits multiplied elementwise by the binary mask
};

MaskMode parse_mask_mode(std::string_view name);
std::string_view to_string(MaskMode mode);

/// Logit assigned to masked positions in additive mode.
inline constexpr double kMaskedLogit = -1e9;

struct AttentionInputs {
  Eigen::MatrixXd q;  // l x d
  Eigen::MatrixXd k;  // l_k x d
  Eigen::MatrixXd v;  // l_k x d_v
  double scale = 1.0;

  /// Uses scale = 1/sqrt(d).
  static AttentionInputs make(Eigen::MatrixXd q, Eigen::MatrixXd k, Eigen::MatrixXd v);
  void validate() const;
};

struct AttentionPair {
  Eigen::MatrixXd masked;
  Eigen::MatrixXd unmasked;
};

/// Row-stochastic softmax weights, l x l_k.
Eigen::MatrixXd attention_weights(const AttentionInputs& in, const BinaryMatrix* mask,
                                  MaskMode mode = MaskMode::kAdditive);

/// softmax(QK^T * scale [masked]) V. A null mask gives plain attention.
Eigen::MatrixXd attention(const AttentionInputs& in, const BinaryMatrix* mask,
                          MaskMode mode = MaskMode::kAdditive);

AttentionPair attention_pair(const AttentionInputs& in, const BinaryMatrix& mask,
                             MaskMode mode = MaskMode::kAdditive);

}  // namespace trajdiff
